#include "revsde/sde.hpp"

#include "revsde/expr/eval.hpp"
#include "revsde/parallel.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace revsde::sim {

namespace {

constexpr double kStateNormGuard = 1e8;

bool state_ok(const double* x, int d) {
    for (int i = 0; i < d; ++i)
        if (!std::isfinite(x[i]) || std::abs(x[i]) > kStateNormGuard) return false;
    return true;
}

// Allocation-free stepping kernel for a compile-time dimension.
template <int D>
class Kernel {
  public:
    explicit Kernel(const SdeSystem& sys) : sys_(&sys) {
        corr2_ = 2.0 * sys.correction_lambda;
        need_sigma_grad_ = corr2_ != 0.0;
        gradient_drift_ = sys.drift_kind == DriftKind::GradientForm;

        std::size_t max_nodes = sys.fields.potential().nodes().size();
        for (int i = 0; i < D; ++i) {
            for (int j = 0; j < D; ++j) {
                const auto& e = sys.fields.sigma_entry(i, j);
                sig_const_[i][j] = e.is_constant();
                sig_value_[i][j] = sig_const_[i][j] ? e.constant_value() : 0.0;
                max_nodes = std::max(max_nodes, e.nodes().size());
            }
        }
        if (!gradient_drift_)
            for (const auto& e : sys.explicit_drift) max_nodes = std::max(max_nodes, e.nodes().size());
        dual_scratch_.resize(max_nodes);
        val_scratch_.resize(max_nodes);
    }

    // One Euler-Maruyama step in place; false when the guard trips.
    bool step(double* x, double dt, double sq2dt, RandomStream& rng) {
        expr::DualN<D> xd[D];
        for (int i = 0; i < D; ++i) xd[i] = expr::DualN<D>::variable(x[i], i);

        double s[D][D];
        double ds[D][D][D];  // ds[l][i][j] = d sigma_ij / d x_l
        for (int i = 0; i < D; ++i) {
            for (int j = 0; j < D; ++j) {
                if (sig_const_[i][j]) {
                    s[i][j] = sig_value_[i][j];
                    if (need_sigma_grad_)
                        for (int l = 0; l < D; ++l) ds[l][i][j] = 0.0;
                } else if (need_sigma_grad_) {
                    const auto v = expr::evaluate_unchecked<expr::DualN<D>>(
                        sys_->fields.sigma_entry(i, j), xd, dual_scratch_.data());
                    s[i][j] = v.v;
                    for (int l = 0; l < D; ++l) ds[l][i][j] = v.g[static_cast<std::size_t>(l)];
                } else {
                    s[i][j] = expr::evaluate_unchecked<double>(sys_->fields.sigma_entry(i, j), x,
                                                               val_scratch_.data());
                }
            }
        }

        double b[D];
        if (gradient_drift_) {
            const auto v = expr::evaluate_unchecked<expr::DualN<D>>(sys_->fields.potential(), xd,
                                                                    dual_scratch_.data());
            // b = -(S S^T) grad V
            double t[D];
            for (int l = 0; l < D; ++l) {
                t[l] = 0.0;
                for (int j = 0; j < D; ++j) t[l] += s[j][l] * v.g[static_cast<std::size_t>(j)];
            }
            for (int i = 0; i < D; ++i) {
                double acc = 0.0;
                for (int l = 0; l < D; ++l) acc += s[i][l] * t[l];
                b[i] = -acc;
            }
        } else {
            for (int i = 0; i < D; ++i)
                b[i] = expr::evaluate_unchecked<double>(
                    sys_->explicit_drift[static_cast<std::size_t>(i)], x, val_scratch_.data());
        }

        if (need_sigma_grad_) {
            // div M - sigma div sigma^T in Euclidean row divergences.
            double coldiv[D];
            for (int l = 0; l < D; ++l) {
                coldiv[l] = 0.0;
                for (int i = 0; i < D; ++i) coldiv[l] += ds[i][i][l];
            }
            for (int j = 0; j < D; ++j) {
                double divm = 0.0;
                for (int i = 0; i < D; ++i)
                    for (int l = 0; l < D; ++l)
                        divm += ds[i][j][l] * s[i][l] + s[j][l] * ds[i][i][l];
                double sigdiv = 0.0;
                for (int l = 0; l < D; ++l) sigdiv += s[j][l] * coldiv[l];
                b[j] += corr2_ * (divm - sigdiv);
            }
        }

        double xi[D];
        for (int l = 0; l < D; ++l) xi[l] = rng.next_normal();
        for (int i = 0; i < D; ++i) {
            double noise = 0.0;
            for (int l = 0; l < D; ++l) noise += s[i][l] * xi[l];
            x[i] += b[i] * dt + sq2dt * noise;
        }
        return state_ok(x, D);
    }

  private:
    const SdeSystem* sys_;
    double corr2_ = 0.0;
    bool need_sigma_grad_ = false;
    bool gradient_drift_ = true;
    bool sig_const_[D][D] = {};
    double sig_value_[D][D] = {};
    std::vector<expr::DualN<D>> dual_scratch_;
    std::vector<double> val_scratch_;
};

// Runs one trajectory, writing saved states (including t=0) into `out`
// (n_saved * dim doubles). Returns false if the guard tripped; the state is
// frozen at its last valid value from then on.
template <int D>
bool run_trajectory(const SdeSystem& sys, Kernel<D>& kernel, const double* x0, double dt,
                    long n_steps, long stride, RandomStream& rng, double* out) {
    double x[D];
    for (int i = 0; i < D; ++i) x[i] = x0[i];
    const double sq2dt = std::sqrt(2.0 * dt);

    long save_at = 0;
    for (int i = 0; i < D; ++i) out[i] = x[i];
    double* next = out + D;

    bool ok = true;
    double frozen[D];
    for (long k = 1; k <= n_steps; ++k) {
        if (ok) {
            for (int i = 0; i < D; ++i) frozen[i] = x[i];
            if (!kernel.step(x, dt, sq2dt, rng)) {
                ok = false;
                for (int i = 0; i < D; ++i) x[i] = frozen[i];
            }
        }
        if (k % stride == 0) {
            (void)save_at;
            for (int i = 0; i < D; ++i) next[i] = x[i];
            next += D;
        }
    }
    return ok;
}

template <class F>
auto dispatch_dim(int d, F&& f) {
    switch (d) {
        case 1: return f(std::integral_constant<int, 1>{});
        case 2: return f(std::integral_constant<int, 2>{});
        case 3: return f(std::integral_constant<int, 3>{});
        case 4: return f(std::integral_constant<int, 4>{});
        case 5: return f(std::integral_constant<int, 5>{});
        case 6: return f(std::integral_constant<int, 6>{});
        case 7: return f(std::integral_constant<int, 7>{});
        case 8: return f(std::integral_constant<int, 8>{});
        default: throw std::invalid_argument("simulation supports dimensions 1..8");
    }
}

}  // namespace

Eigen::VectorXd SdeSystem::drift_at(const Eigen::VectorXd& x) const {
    Eigen::VectorXd b;
    if (drift_kind == DriftKind::GradientForm) {
        const Eigen::MatrixXd s = fields.sigma_value(x);
        b = -(s * s.transpose()) * fields.potential_gradient(x);
    } else {
        b.resize(dim);
        for (int i = 0; i < dim; ++i)
            b[i] = expr::eval_value(explicit_drift[static_cast<std::size_t>(i)], x);
    }
    if (correction_lambda != 0.0)
        b += 2.0 * correction_lambda * reversibility::noise_correction(fields, x);
    return b;
}

Eigen::MatrixXd SdeSystem::sigma_at(const Eigen::VectorXd& x) const {
    return fields.sigma_value(x);
}

SdeSystem make_gradient_system(expr::FieldSet fields, double lambda) {
    SdeSystem s{fields.dim(), std::move(fields), DriftKind::GradientForm, {}, lambda, 0.0};
    return s;
}

SdeSystem make_explicit_system(expr::FieldSet fields, std::vector<expr::ExpressionAst> drift,
                               double lambda) {
    if (drift.size() != static_cast<std::size_t>(fields.dim()))
        throw std::invalid_argument("explicit drift needs one entry per dimension");
    SdeSystem s{fields.dim(), std::move(fields), DriftKind::Explicit, std::move(drift), lambda, 0.0};
    return s;
}

SdeSystem to_ito(const SdeSystem& system) {
    SdeSystem out = system;
    out.correction_lambda += system.lambda;
    out.lambda = 0.0;
    return out;
}

SdeSystem assemble_slow_fast(const SlowFastSystem& sf) {
    if (sf.timescale_n < 1.0) throw std::invalid_argument("timescale n must be >= 1");
    const int d = sf.slow_dim;
    const int m = sf.fast_dim;
    const int dim = d + m;
    if (sf.potential.dim() != dim)
        throw std::invalid_argument("slow-fast potential dimension mismatch");
    if (sf.sigma1.size() != static_cast<std::size_t>(d) * static_cast<std::size_t>(d) ||
        sf.sigma2.size() != static_cast<std::size_t>(m) * static_cast<std::size_t>(m))
        throw std::invalid_argument("slow-fast volatility block dimension mismatch");

    const double root_n = std::sqrt(sf.timescale_n);
    std::vector<expr::ExpressionAst> entries;
    entries.reserve(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            if (i < d && j < d) {
                entries.push_back(sf.sigma1[static_cast<std::size_t>(i * d + j)]);
            } else if (i >= d && j >= d) {
                entries.push_back(expr::ExpressionAst::scale(
                    root_n, sf.sigma2[static_cast<std::size_t>((i - d) * m + (j - d))]));
            } else {
                entries.push_back(expr::ExpressionAst::constant(0.0, dim));
            }
        }
    }
    return make_gradient_system(expr::FieldSet(dim, sf.potential, std::move(entries)), 1.0);
}

double stiffness_max_dt(const SlowFastSystem& sf, const std::vector<Eigen::VectorXd>& probes) {
    const int m = sf.fast_dim;
    double max_eig = 0.0;
    for (const auto& p : probes) {
        Eigen::MatrixXd s2(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                s2(i, j) = expr::eval_value(sf.sigma2[static_cast<std::size_t>(i * m + j)], p);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sf.timescale_n * s2 * s2.transpose());
        max_eig = std::max(max_eig, eig.eigenvalues().maxCoeff());
    }
    if (max_eig <= 0.0) return std::numeric_limits<double>::infinity();
    return 0.1 / max_eig;
}

std::vector<double> EnsembleResult::final_component(int k) const {
    std::vector<double> out(static_cast<std::size_t>(n_traj));
    const long last = n_saved() - 1;
    for (long j = 0; j < n_traj; ++j) out[static_cast<std::size_t>(j)] = state(j, last, k);
    return out;
}

std::vector<Eigen::VectorXd> euler_maruyama(const SdeSystem& system_ito, const Eigen::VectorXd& x0,
                                            double dt, long n_steps, RandomStream& stream,
                                            long save_stride) {
    if (system_ito.lambda != 0.0)
        throw std::invalid_argument("euler_maruyama expects an Ito-convention system (use to_ito)");
    if (dt <= 0.0 || n_steps < 1) throw std::invalid_argument("need dt > 0 and n_steps >= 1");
    if (save_stride < 1 || n_steps % save_stride != 0)
        throw std::invalid_argument("save stride must divide the step count");

    const long n_saved = n_steps / save_stride + 1;
    std::vector<double> buffer(static_cast<std::size_t>(n_saved) *
                               static_cast<std::size_t>(system_ito.dim));
    dispatch_dim(system_ito.dim, [&](auto dim_tag) {
        constexpr int D = decltype(dim_tag)::value;
        Kernel<D> kernel(system_ito);
        run_trajectory<D>(system_ito, kernel, x0.data(), dt, n_steps, save_stride, stream,
                          buffer.data());
    });

    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(n_saved));
    for (long k = 0; k < n_saved; ++k)
        out.emplace_back(Eigen::Map<const Eigen::VectorXd>(
            buffer.data() + k * system_ito.dim, system_ito.dim));
    return out;
}

EnsembleResult simulate_ensemble(const SdeSystem& system, const Eigen::VectorXd& x0, double dt,
                                 double t_final, long n_traj, std::uint64_t seed, long save_stride,
                                 int n_threads) {
    if (t_final <= 0.0 || dt <= 0.0) throw std::invalid_argument("need t_final > 0 and dt > 0");
    if (n_traj < 1) throw std::invalid_argument("need at least one trajectory");
    const long n_steps = static_cast<long>(std::llround(t_final / dt));
    if (n_steps < 1) throw std::invalid_argument("t_final shorter than one step");
    if (save_stride < 1 || n_steps % save_stride != 0)
        throw std::invalid_argument("save stride must divide the step count");

    const SdeSystem ito = to_ito(system);
    const int d = ito.dim;
    const long n_saved = n_steps / save_stride + 1;

    EnsembleResult res;
    res.n_traj = n_traj;
    res.dim = d;
    res.dt = dt;
    res.seed = seed;
    res.save_stride = save_stride;
    res.times.resize(static_cast<std::size_t>(n_saved));
    for (long k = 0; k < n_saved; ++k)
        res.times[static_cast<std::size_t>(k)] = static_cast<double>(k * save_stride) * dt;
    res.states.assign(static_cast<std::size_t>(n_traj) * static_cast<std::size_t>(n_saved) *
                          static_cast<std::size_t>(d),
                      0.0);

    std::atomic<long> rejected{0};
    dispatch_dim(d, [&](auto dim_tag) {
        constexpr int D = decltype(dim_tag)::value;
        parallel_for(n_traj, n_threads, [&](long begin, long end) {
            Kernel<D> kernel(ito);
            for (long j = begin; j < end; ++j) {
                RandomStream stream(seed, static_cast<std::uint64_t>(j));
                double* out = res.states.data() +
                              static_cast<std::size_t>(j) * static_cast<std::size_t>(n_saved) *
                                  static_cast<std::size_t>(d);
                if (!run_trajectory<D>(ito, kernel, x0.data(), dt, n_steps, save_stride, stream,
                                       out))
                    rejected.fetch_add(1, std::memory_order_relaxed);
            }
        });
    });

    res.rejected_steps = rejected.load();
    if (res.rejected_steps * 100 > n_traj)
        throw std::runtime_error("more than 1% of trajectories hit the finiteness guard");
    return res;
}

std::vector<Eigen::VectorXd> heun_stratonovich(const SdeSystem& system_strat,
                                               const Eigen::VectorXd& x0, double dt, long n_steps,
                                               RandomStream& stream, long save_stride) {
    if (dt <= 0.0 || n_steps < 1) throw std::invalid_argument("need dt > 0 and n_steps >= 1");
    if (save_stride < 1 || n_steps % save_stride != 0)
        throw std::invalid_argument("save stride must divide the step count");
    const int d = system_strat.dim;
    const double sq2 = std::sqrt(2.0);

    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(n_steps / save_stride + 1));
    Eigen::VectorXd x = x0;
    out.push_back(x);
    Eigen::VectorXd dw(d);
    for (long k = 1; k <= n_steps; ++k) {
        for (int i = 0; i < d; ++i) dw[i] = stream.next_normal() * std::sqrt(dt);
        const Eigen::VectorXd b0 = system_strat.drift_at(x);
        const Eigen::MatrixXd s0 = system_strat.sigma_at(x);
        const Eigen::VectorXd pred = x + b0 * dt + sq2 * (s0 * dw);
        const Eigen::VectorXd b1 = system_strat.drift_at(pred);
        const Eigen::MatrixXd s1 = system_strat.sigma_at(pred);
        x += 0.5 * (b0 + b1) * dt + sq2 * (0.5 * (s0 + s1) * dw);
        if (!state_ok(x.data(), d)) throw std::runtime_error("heun trajectory left the finite domain");
        if (k % save_stride == 0) out.push_back(x);
    }
    return out;
}

}  // namespace revsde::sim
