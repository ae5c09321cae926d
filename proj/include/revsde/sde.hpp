#pragma once

#include "revsde/expr/fieldset.hpp"
#include "revsde/reversibility.hpp"
#include "revsde/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace revsde::sim {

enum class DriftKind {
    GradientForm,  // -sigma sigma^T grad V
    Explicit,      // user-supplied expressions
};

// Description of dX = B dt + sqrt(2) sigma o_lambda dW. After to_ito() the
// convention is Ito and the lambda correction is folded into the (lazily
// evaluated) drift via `correction_lambda`.
struct SdeSystem {
    int dim = 0;
    expr::FieldSet fields;  // sigma and V
    DriftKind drift_kind = DriftKind::GradientForm;
    std::vector<expr::ExpressionAst> explicit_drift;  // dim entries when Explicit
    double lambda = 0.0;
    double correction_lambda = 0.0;  // drift += 2*correction_lambda*(div M - sigma div sigma^T)

    Eigen::VectorXd drift_at(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd sigma_at(const Eigen::VectorXd& x) const;
};

SdeSystem make_gradient_system(expr::FieldSet fields, double lambda);
SdeSystem make_explicit_system(expr::FieldSet fields, std::vector<expr::ExpressionAst> drift,
                               double lambda);

// Appendix-style conversion to the Ito convention; identity when already Ito.
SdeSystem to_ito(const SdeSystem& system);

// Slow-fast block system: fast drift scaled by n, fast noise by sqrt(n), both
// blocks in the Klimontovich convention.
struct SlowFastSystem {
    int slow_dim = 1;
    int fast_dim = 1;
    expr::ExpressionAst potential;            // over slow_dim + fast_dim variables
    std::vector<expr::ExpressionAst> sigma1;  // slow block, d x d
    std::vector<expr::ExpressionAst> sigma2;  // fast block, m x m
    double timescale_n = 1.0;
};

SdeSystem assemble_slow_fast(const SlowFastSystem& sf);

// Largest stable step for the stiff fast block: 0.1 / max eigenvalue of
// n sigma2 sigma2^T over the probe points.
double stiffness_max_dt(const SlowFastSystem& sf, const std::vector<Eigen::VectorXd>& probes);

struct EnsembleResult {
    long n_traj = 0;
    int dim = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    long save_stride = 1;
    std::vector<double> times;   // n_saved entries, starting at t=0
    std::vector<double> states;  // [traj][save][dim], row-major
    long rejected_steps = 0;     // trajectories halted by the finiteness guard

    double state(long traj, long save, int k) const {
        return states[static_cast<std::size_t>((traj * static_cast<long>(times.size()) + save) *
                                                   dim +
                                               k)];
    }
    long n_saved() const { return static_cast<long>(times.size()); }
    std::vector<double> final_component(int k) const;
};

// Fixed-step Euler-Maruyama for an Ito-convention system:
//   x_{k+1} = x_k + B(x_k) dt + sqrt(2) sigma(x_k) xi_k sqrt(dt).
// A trajectory whose state goes non-finite (or exceeds norm 1e8) is frozen at
// its last valid state and counted in rejected_steps.
std::vector<Eigen::VectorXd> euler_maruyama(const SdeSystem& system_ito,
                                            const Eigen::VectorXd& x0, double dt, long n_steps,
                                            RandomStream& stream, long save_stride = 1);

// Ensemble with one counter-based stream per trajectory; bit-identical for a
// fixed seed regardless of thread count. Throws when more than 1% of the
// trajectories hit the finiteness guard.
EnsembleResult simulate_ensemble(const SdeSystem& system, const Eigen::VectorXd& x0, double dt,
                                 double t_final, long n_traj, std::uint64_t seed,
                                 long save_stride, int n_threads = 1);

// Stochastic Heun step for a Stratonovich-convention system; cross-check for
// the Ito-conversion route at lambda = 1/2.
std::vector<Eigen::VectorXd> heun_stratonovich(const SdeSystem& system_strat,
                                               const Eigen::VectorXd& x0, double dt, long n_steps,
                                               RandomStream& stream, long save_stride = 1);

}  // namespace revsde::sim
