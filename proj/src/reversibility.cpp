#include "revsde/reversibility.hpp"

#include "revsde/parallel.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

namespace revsde::reversibility {

namespace {

Eigen::VectorXd divergence(const expr::FieldSet& fields, const geometry::MatrixField& A,
                           const Eigen::VectorXd& x, DivergenceVariant variant) {
    return variant == DivergenceVariant::Covariant ? geometry::row_cov_div(fields, A, x)
                                                   : geometry::row_euclid_div(A, x);
}

}  // namespace

Eigen::VectorXd lambda_residual(const expr::FieldSet& fields, NoiseConvention lambda,
                                const Eigen::VectorXd& x, DivergenceVariant variant) {
    const geometry::DiffusionField mf(fields);
    const geometry::SigmaTransposeField stf(fields);
    const Eigen::MatrixXd s = fields.sigma_value(x);
    return (2.0 * lambda.lambda - 1.0) * divergence(fields, mf, x, variant) -
           2.0 * lambda.lambda * (s * divergence(fields, stf, x, variant));
}

Eigen::VectorXd euclidean_lambda_residual(const geometry::MatrixField& sigma, double lambda,
                                          const Eigen::VectorXd& x) {
    const int d = sigma.dim();
    Eigen::MatrixXd s;
    std::vector<Eigen::MatrixXd> ds;
    sigma.eval(x, s, ds);

    // (div M)_j = d_i (s_jl s_il); (sigma div sigma^T)_j = s_jl d_i s_il.
    Eigen::VectorXd div_m = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd col_div = Eigen::VectorXd::Zero(d);  // (div sigma^T)_l = d_i s_il
    for (int l = 0; l < d; ++l)
        for (int i = 0; i < d; ++i) col_div[l] += ds[static_cast<std::size_t>(i)](i, l);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i)
            for (int l = 0; l < d; ++l)
                div_m[j] += ds[static_cast<std::size_t>(i)](j, l) * s(i, l) +
                            s(j, l) * ds[static_cast<std::size_t>(i)](i, l);

    return (2.0 * lambda - 1.0) * div_m - 2.0 * lambda * (s * col_div);
}

Eigen::VectorXd noise_correction(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    const geometry::DiffusionField mf(fields);
    const geometry::SigmaTransposeField stf(fields);
    const Eigen::MatrixXd s = fields.sigma_value(x);
    return geometry::row_euclid_div(mf, x) - s * geometry::row_euclid_div(stf, x);
}

Eigen::VectorXd sde_generator_drift(const expr::FieldSet& fields, NoiseConvention lambda,
                                    const Eigen::VectorXd& x) {
    const Eigen::MatrixXd s = fields.sigma_value(x);
    const Eigen::VectorXd grad_v = fields.potential_gradient(x);
    return -(s * s.transpose()) * grad_v + 2.0 * lambda.lambda * noise_correction(fields, x);
}

Eigen::VectorXd reversible_generator_drift(const expr::FieldSet& fields, const GibbsSpec& gibbs,
                                           const Eigen::VectorXd& x) {
    const Eigen::MatrixXd s = fields.sigma_value(x);
    const Eigen::VectorXd grad_v = fields.potential_gradient(x);
    const geometry::DiffusionField mf(fields);
    const Eigen::VectorXd div_m = gibbs.mode == MeasureMode::Flat
                                      ? geometry::row_euclid_div(mf, x)
                                      : geometry::row_cov_div(fields, mf, x);
    return -(s * s.transpose()) * grad_v + div_m;
}

Eigen::VectorXd generator_gap(const expr::FieldSet& fields, NoiseConvention lambda,
                              const GibbsSpec& gibbs, const Eigen::VectorXd& x) {
    return sde_generator_drift(fields, lambda, x) - reversible_generator_drift(fields, gibbs, x);
}

Eigen::VectorXd drift_convert(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& drift,
                              const expr::FieldSet& fields, NoiseConvention from_lambda,
                              NoiseConvention to_gamma, const Eigen::VectorXd& x) {
    const double delta = from_lambda.lambda - to_gamma.lambda;
    Eigen::VectorXd b = drift(x);
    if (delta == 0.0) return b;
    return b + 2.0 * delta * noise_correction(fields, x);
}

long GridSpec::total_points() const {
    long total = 1;
    for (int r : resolution) total *= r;
    return total;
}

Eigen::VectorXd GridSpec::point(long flat_index) const {
    const int d = static_cast<int>(resolution.size());
    Eigen::VectorXd p(d);
    long rem = flat_index;
    // Last dimension fastest: flat index enumerates points lexicographically.
    for (int k = d - 1; k >= 0; --k) {
        const int r = resolution[static_cast<std::size_t>(k)];
        const long idx = rem % r;
        rem /= r;
        p[k] = (r == 1) ? lo[k] : lo[k] + (hi[k] - lo[k]) * static_cast<double>(idx) / (r - 1);
    }
    return p;
}

ReversibilityVerdict classify(const expr::FieldSet& fields, NoiseConvention lambda,
                              const GibbsSpec& gibbs, const GridSpec& grid, double tolerance,
                              int n_threads) {
    const long n = grid.total_points();
    if (n <= 0) throw std::invalid_argument("classification grid is empty");
    const DivergenceVariant variant = variant_for(gibbs.mode);

    struct Partial {
        double res_max = -1.0;
        long res_idx = -1;
        double gap_max = -1.0;
        long gap_idx = -1;
    };
    const int chunks = std::max(1, n_threads);
    std::vector<Partial> partials(static_cast<std::size_t>(chunks));
    std::mutex chunk_mutex;
    long next_chunk = 0;

    parallel_for(n, n_threads, [&](long begin, long end) {
        std::size_t slot;
        {
            std::lock_guard<std::mutex> lock(chunk_mutex);
            slot = static_cast<std::size_t>(next_chunk++);
        }
        Partial p;
        for (long i = begin; i < end; ++i) {
            const Eigen::VectorXd x = grid.point(i);
            double res, gap;
            try {
                res = lambda_residual(fields, lambda, x, variant).cwiseAbs().maxCoeff();
                gap = generator_gap(fields, lambda, gibbs, x).cwiseAbs().maxCoeff();
            } catch (const std::exception& e) {
                std::ostringstream os;
                os << "classification failed at grid point (";
                for (int k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
                os << "): " << e.what();
                throw std::runtime_error(os.str());
            }
            if (res > p.res_max) {
                p.res_max = res;
                p.res_idx = i;
            }
            if (gap > p.gap_max) {
                p.gap_max = gap;
                p.gap_idx = i;
            }
        }
        // Chunks are contiguous and processed lowest-index-first within each
        // worker, so storing by begin-order keeps the reduction deterministic.
        partials[slot] = p;
    });

    // Deterministic reduction: strict improvement only, and partials are
    // merged by ascending chunk start, which follows lexicographic point
    // order.
    std::sort(partials.begin(), partials.end(),
              [](const Partial& a, const Partial& b) { return a.res_idx < b.res_idx; });
    ReversibilityVerdict v;
    v.n_points = n;
    v.tolerance = tolerance;
    v.variant = variant;
    double res_max = -1.0;
    long res_idx = -1;
    double gap_max = -1.0;
    long gap_idx = -1;
    for (const Partial& p : partials) {
        if (p.res_idx >= 0 && p.res_max > res_max) {
            res_max = p.res_max;
            res_idx = p.res_idx;
        }
        if (p.gap_idx >= 0 && p.gap_max > gap_max) {
            gap_max = p.gap_max;
            gap_idx = p.gap_idx;
        }
    }
    v.max_residual = res_max;
    v.argmax_point = grid.point(res_idx);
    v.generator_gap_max = gap_max;
    v.gap_argmax_point = grid.point(gap_idx);
    v.reversible = (v.max_residual < tolerance) && (v.generator_gap_max < tolerance);
    return v;
}

}  // namespace revsde::reversibility
