#include "revsde/geometry.hpp"

#include "revsde/expr/eval.hpp"

#include <cmath>

namespace revsde::geometry {

namespace {

// Everything geometry_at and the divergence operators need at one point.
struct Workspace {
    Eigen::MatrixXd S;
    std::vector<Eigen::MatrixXd> dS;
    Eigen::MatrixXd M;
    std::vector<Eigen::MatrixXd> dM;
    Eigen::MatrixXd g;
    std::vector<Eigen::MatrixXd> dg;
    double omega = 0.0;
};

Workspace build_workspace(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    Workspace w;
    fields.sigma_partials(x, w.S, w.dS);
    const int d = fields.dim();

    w.M = w.S * w.S.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w.M);
    if (!(eig.eigenvalues().minCoeff() > 1e-10))
        throw expr::ConditioningError("diffusion matrix nearly singular (eigenvalue <= 1e-10)");

    w.dM.reserve(static_cast<std::size_t>(d));
    for (int l = 0; l < d; ++l) {
        Eigen::MatrixXd t = w.dS[static_cast<std::size_t>(l)] * w.S.transpose();
        w.dM.push_back(t + t.transpose());
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(w.M);
    w.g = lu.inverse();
    w.omega = 1.0 / lu.determinant();
    if (!(w.omega > 0.0)) throw expr::ConditioningError("volume density not positive");

    w.dg.reserve(static_cast<std::size_t>(d));
    for (int l = 0; l < d; ++l) w.dg.push_back(-w.g * w.dM[static_cast<std::size_t>(l)] * w.g);
    return w;
}

}  // namespace

void SigmaField::eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                      std::vector<Eigen::MatrixXd>& dA) const {
    fields_->sigma_partials(x, A, dA);
}

void SigmaTransposeField::eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                               std::vector<Eigen::MatrixXd>& dA) const {
    Eigen::MatrixXd s;
    std::vector<Eigen::MatrixXd> ds;
    fields_->sigma_partials(x, s, ds);
    A = s.transpose();
    dA.resize(ds.size());
    for (std::size_t l = 0; l < ds.size(); ++l) dA[l] = ds[l].transpose();
}

void DiffusionField::eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                          std::vector<Eigen::MatrixXd>& dA) const {
    Eigen::MatrixXd s;
    std::vector<Eigen::MatrixXd> ds;
    fields_->sigma_partials(x, s, ds);
    A = s * s.transpose();
    dA.resize(ds.size());
    for (std::size_t l = 0; l < ds.size(); ++l) {
        Eigen::MatrixXd t = ds[l] * s.transpose();
        dA[l] = t + t.transpose();
    }
}

AstMatrixField::AstMatrixField(std::vector<expr::ExpressionAst> entries, int dim,
                               expr::DerivativeMode mode)
    : entries_(std::move(entries)), dim_(dim), mode_(mode) {
    if (entries_.size() != static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_))
        throw std::invalid_argument("AstMatrixField needs d*d entries");
}

void AstMatrixField::eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                          std::vector<Eigen::MatrixXd>& dA) const {
    A.resize(dim_, dim_);
    dA.assign(static_cast<std::size_t>(dim_), Eigen::MatrixXd(dim_, dim_));
    for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) {
            const auto& e = entries_[static_cast<std::size_t>(i * dim_ + j)];
            if (mode_.analytic) {
                expr::DynDual v = expr::eval_gradient(e, x);
                A(i, j) = v.v;
                for (int l = 0; l < dim_; ++l) dA[static_cast<std::size_t>(l)](i, j) = v.g[l];
            } else {
                expr::DerivOutput v = expr::fd_derivatives(e, x, mode_.fd_step);
                A(i, j) = v.value;
                for (int l = 0; l < dim_; ++l) dA[static_cast<std::size_t>(l)](i, j) = v.gradient[l];
            }
        }
    }
}

GeometryPoint geometry_at(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    const int d = fields.dim();
    Workspace w = build_workspace(fields, x);

    GeometryPoint gp;
    gp.x = x;
    gp.M = w.M;
    gp.g = w.g;
    gp.omega = w.omega;
    gp.sqrt_omega = std::sqrt(w.omega);

    // Gamma^k_{ij} = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij); g^{kl} = M(k,l).
    gp.christoffel.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(d, d));
    for (int k = 0; k < d; ++k) {
        Eigen::MatrixXd& gk = gp.christoffel[static_cast<std::size_t>(k)];
        for (int i = 0; i < d; ++i) {
            for (int j = i; j < d; ++j) {
                double sum = 0.0;
                for (int l = 0; l < d; ++l) {
                    sum += w.M(k, l) * (w.dg[static_cast<std::size_t>(i)](j, l) +
                                        w.dg[static_cast<std::size_t>(j)](i, l) -
                                        w.dg[static_cast<std::size_t>(l)](i, j));
                }
                gk(i, j) = 0.5 * sum;
                gk(j, i) = gk(i, j);
            }
        }
    }

    gp.contracted.resize(d);
    for (int k = 0; k < d; ++k) {
        double sum = 0.0;
        for (int i = 0; i < d; ++i) sum += gp.christoffel[static_cast<std::size_t>(i)](i, k);
        gp.contracted[k] = sum;
    }
    return gp;
}

Eigen::VectorXd row_euclid_div(const MatrixField& A, const Eigen::VectorXd& x) {
    const int d = A.dim();
    Eigen::MatrixXd a;
    std::vector<Eigen::MatrixXd> da;
    A.eval(x, a, da);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) out[j] += da[static_cast<std::size_t>(i)](j, i);
    return out;
}

Eigen::VectorXd row_cov_div(const expr::FieldSet& fields, const MatrixField& A,
                            const Eigen::VectorXd& x) {
    const int d = A.dim();
    Eigen::MatrixXd a;
    std::vector<Eigen::MatrixXd> da;
    A.eval(x, a, da);

    // Gamma trace taken from the Christoffel symbols themselves; the Jacobi
    // route below (log_omega_gradient, graham_correction) stays independent.
    const Eigen::VectorXd contracted = geometry_at(fields, x).contracted;

    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) out[j] += da[static_cast<std::size_t>(i)](j, i);
        for (int k = 0; k < d; ++k) out[j] += contracted[k] * a(j, k);
    }
    return out;
}

Eigen::VectorXd cancellation_gap(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    const DiffusionField mf(fields);
    const SigmaTransposeField stf(fields);
    const Eigen::MatrixXd s = fields.sigma_value(x);

    const Eigen::VectorXd cov = row_cov_div(fields, mf, x) - s * row_cov_div(fields, stf, x);
    const Eigen::VectorXd euc = row_euclid_div(mf, x) - s * row_euclid_div(stf, x);
    return cov - euc;
}

Eigen::VectorXd log_omega_gradient(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    Workspace w = build_workspace(fields, x);
    const int d = fields.dim();
    Eigen::VectorXd out(d);
    for (int j = 0; j < d; ++j) out[j] = (w.M * w.dg[static_cast<std::size_t>(j)]).trace();
    return out;
}

Eigen::VectorXd graham_correction(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    Workspace w = build_workspace(fields, x);
    const int d = fields.dim();

    Eigen::VectorXd dlog(d);
    for (int a = 0; a < d; ++a) dlog[a] = (w.M * w.dg[static_cast<std::size_t>(a)]).trace();

    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (int mu = 0; mu < d; ++mu) {
        for (int a = 0; a < d; ++a)
            out[mu] += w.dM[static_cast<std::size_t>(a)](a, mu) + 0.5 * w.M(a, mu) * dlog[a];
    }
    return out;
}

Eigen::VectorXd laplace_beltrami_drift(const expr::FieldSet& fields, const Eigen::VectorXd& x) {
    GeometryPoint gp = geometry_at(fields, x);
    const int d = fields.dim();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i)
        out[i] = -(gp.M.cwiseProduct(gp.christoffel[static_cast<std::size_t>(i)])).sum();
    return out;
}

}  // namespace revsde::geometry
