#pragma once

#include "revsde/expr/fieldset.hpp"
#include "revsde/geometry.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace revsde::reversibility {

// Stochastic-integral convention: evaluation point within each increment.
struct NoiseConvention {
    double lambda = 0.0;

    NoiseConvention() = default;
    explicit NoiseConvention(double l) : lambda(l) {
        if (!(l >= 0.0 && l <= 1.0))
            throw std::invalid_argument("noise convention lambda must lie in [0,1]");
    }

    static NoiseConvention ito() { return NoiseConvention(0.0); }
    static NoiseConvention stratonovich() { return NoiseConvention(0.5); }
    static NoiseConvention klimontovich() { return NoiseConvention(1.0); }
};

enum class DivergenceVariant { Covariant, Euclidean };
enum class MeasureMode { Flat, Riemannian };

// Reference measure: flat ~ exp(-beta V) dx, riemannian ~ exp(-beta V)
// sqrt(omega_M) dx.
struct GibbsSpec {
    MeasureMode mode = MeasureMode::Flat;
    double beta = 1.0;
};

inline DivergenceVariant variant_for(MeasureMode mode) {
    return mode == MeasureMode::Flat ? DivergenceVariant::Euclidean : DivergenceVariant::Covariant;
}

// Residual of the algebraic reversibility condition:
//   R = (2 lambda - 1) D(sigma sigma^T) - 2 lambda sigma D(sigma^T),
// with D the covariant or Euclidean row divergence. Zero iff the lambda-SDE
// is reversible for the matching Gibbs measure at x.
Eigen::VectorXd lambda_residual(const expr::FieldSet& fields, NoiseConvention lambda,
                                const Eigen::VectorXd& x, DivergenceVariant variant);

// Same residual evaluated on an arbitrary (e.g. quadrature-defined) volatility
// field; Euclidean divergences only, no geometry needed.
Eigen::VectorXd euclidean_lambda_residual(const geometry::MatrixField& sigma, double lambda,
                                          const Eigen::VectorXd& x);

// div(sigma sigma^T) - sigma div(sigma^T) in Euclidean row divergences: the
// lambda-independent part of the noise-induced drift.
Eigen::VectorXd noise_correction(const expr::FieldSet& fields, const Eigen::VectorXd& x);

// First-order coefficient of the lambda-SDE generator:
//   -M grad V + 2 lambda (div M - sigma div sigma^T).
Eigen::VectorXd sde_generator_drift(const expr::FieldSet& fields, NoiseConvention lambda,
                                    const Eigen::VectorXd& x);

// Drift of the unique generator with diffusion M that is self-adjoint in
// L^2(G): -M grad V + div M (flat) or -M grad V + div_c M (riemannian).
Eigen::VectorXd reversible_generator_drift(const expr::FieldSet& fields, const GibbsSpec& gibbs,
                                           const Eigen::VectorXd& x);

// sde_generator_drift - reversible_generator_drift; zero iff reversible at x.
Eigen::VectorXd generator_gap(const expr::FieldSet& fields, NoiseConvention lambda,
                              const GibbsSpec& gibbs, const Eigen::VectorXd& x);

// Drift dictionary between noise conventions:
//   B~ = B + 2 (lambda - gamma) (div M - sigma div sigma^T).
// Converting lambda -> gamma -> lambda returns B exactly.
Eigen::VectorXd drift_convert(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& drift,
                              const expr::FieldSet& fields, NoiseConvention from_lambda,
                              NoiseConvention to_gamma, const Eigen::VectorXd& x);

struct GridSpec {
    Eigen::VectorXd lo, hi;
    std::vector<int> resolution;  // points per dimension, >= 2 each (or 1 with lo==hi)

    long total_points() const;
    Eigen::VectorXd point(long flat_index) const;
};

struct ReversibilityVerdict {
    double max_residual = 0.0;
    Eigen::VectorXd argmax_point;
    long n_points = 0;
    double tolerance = 0.0;
    bool reversible = false;
    DivergenceVariant variant = DivergenceVariant::Euclidean;
    double generator_gap_max = 0.0;
    Eigen::VectorXd gap_argmax_point;
};

// Aggregates lambda_residual (variant matched to the measure) and
// generator_gap over the grid. Deterministic regardless of thread count:
// maxima tie-break on lexicographic point order.
ReversibilityVerdict classify(const expr::FieldSet& fields, NoiseConvention lambda,
                              const GibbsSpec& gibbs, const GridSpec& grid, double tolerance,
                              int n_threads = 1);

}  // namespace revsde::reversibility
