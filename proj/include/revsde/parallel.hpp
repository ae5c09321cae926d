#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace revsde {

// Runs fn over [0, n) split into one contiguous chunk per worker. Results must
// be written to disjoint, index-addressed slots so the outcome is independent
// of scheduling and thread count. Worker exceptions are rethrown in chunk
// order (lowest index first) for the same reason.
inline void parallel_for(long n, int n_threads, const std::function<void(long, long)>& fn) {
    if (n <= 0) return;
    if (n_threads < 1) n_threads = 1;
    const long chunks = std::min<long>(n_threads, n);
    if (chunks == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(chunks));
    const long base = n / chunks;
    const long extra = n % chunks;
    long begin = 0;
    for (long c = 0; c < chunks; ++c) {
        const long len = base + (c < extra ? 1 : 0);
        workers.emplace_back(
            [&fn, &errors, c](long b, long e) {
                try {
                    fn(b, e);
                } catch (...) {
                    errors[static_cast<std::size_t>(c)] = std::current_exception();
                }
            },
            begin, begin + len);
        begin += len;
    }
    for (auto& w : workers) w.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace revsde
