#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace revsde::sim {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A block is a
// pure function of (counter, key), so any (seed, stream) pair addresses an
// independent reproducible sequence regardless of scheduling.
struct Philox4x32 {
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }
};

// Uniform doubles and standard normals drawn from the (seed, stream) Philox
// sequence; `stream` is typically a trajectory index.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    // 64 uniform random bits.
    std::uint64_t next_u64() {
        if (word_pos_ == 0) refill();
        const std::uint32_t a = words_[word_pos_ - 1];
        const std::uint32_t b = words_[word_pos_ - 2];
        word_pos_ -= 2;
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }

    // Uniform on (0,1]; safe as a log argument.
    double next_uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    }

    // Uniform on [0,1).
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

    // Standard normal via Box-Muller; generated in pairs.
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = next_uniform_pos();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        cached_ = r * std::sin(angle);
        have_cached_ = true;
        return r * std::cos(angle);
    }

  private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(block_idx_),
                                                  static_cast<std::uint32_t>(block_idx_ >> 32),
                                                  stream_lo_, stream_hi_};
        words_ = Philox4x32::block(ctr, key_);
        ++block_idx_;
        word_pos_ = 4;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t block_idx_ = 0;
    std::array<std::uint32_t, 4> words_{};
    int word_pos_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace revsde::sim
