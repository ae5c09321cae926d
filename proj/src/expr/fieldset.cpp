#include "revsde/expr/fieldset.hpp"

#include "revsde/expr/eval.hpp"

#include <cmath>

namespace revsde::expr {

double eval_value(const ExpressionAst& ast, const Eigen::VectorXd& x) {
    std::vector<double> xs(x.data(), x.data() + x.size());
    return evaluate<double>(ast, xs);
}

DynDual eval_gradient(const ExpressionAst& ast, const Eigen::VectorXd& x) {
    const int d = ast.dim();
    std::vector<DynDual> xs;
    xs.reserve(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) xs.push_back(DynDual::variable(x[i], i, d));
    return evaluate<DynDual>(ast, xs);
}

Taylor2 eval_taylor2(const ExpressionAst& ast, const Eigen::VectorXd& x) {
    const int d = ast.dim();
    std::vector<Taylor2> xs;
    xs.reserve(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) xs.push_back(Taylor2::variable(x[i], i, d));
    return evaluate<Taylor2>(ast, xs);
}

DerivOutput eval_with_derivatives(const ExpressionAst& ast, const Eigen::VectorXd& x) {
    Taylor2 t = eval_taylor2(ast, x);
    return {t.v, std::move(t.g), std::move(t.h)};
}

DerivOutput fd_derivatives(const ExpressionAst& ast, const Eigen::VectorXd& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite-difference step must be positive");
    const int d = ast.dim();
    auto f = [&](const Eigen::VectorXd& p) { return eval_value(ast, p); };

    DerivOutput out;
    out.value = f(x);
    out.gradient.resize(d);
    out.hessian.resize(d, d);

    Eigen::VectorXd p = x;
    for (int i = 0; i < d; ++i) {
        p[i] = x[i] + h;
        const double fp = f(p);
        p[i] = x[i] - h;
        const double fm = f(p);
        p[i] = x[i];
        out.gradient[i] = (fp - fm) / (2.0 * h);
        out.hessian(i, i) = (fp - 2.0 * out.value + fm) / (h * h);
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            p[i] = x[i] + h;
            p[j] = x[j] + h;
            const double fpp = f(p);
            p[j] = x[j] - h;
            const double fpm = f(p);
            p[i] = x[i] - h;
            const double fmm = f(p);
            p[j] = x[j] + h;
            const double fmp = f(p);
            p[i] = x[i];
            p[j] = x[j];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            out.hessian(i, j) = v;
            out.hessian(j, i) = v;
        }
    }
    return out;
}

namespace {

// Per-coordinate default steps for finite-difference field mode.
double scaled_step(double base, double xi) { return base * std::max(1.0, std::abs(xi)); }

DerivOutput fd_derivatives_scaled(const ExpressionAst& ast, const Eigen::VectorXd& x, double base) {
    // Same stencils as fd_derivatives but with per-coordinate steps.
    const int d = ast.dim();
    auto f = [&](const Eigen::VectorXd& p) { return eval_value(ast, p); };

    DerivOutput out;
    out.value = f(x);
    out.gradient.resize(d);
    out.hessian.resize(d, d);

    Eigen::VectorXd p = x;
    for (int i = 0; i < d; ++i) {
        const double h = scaled_step(base, x[i]);
        p[i] = x[i] + h;
        const double fp = f(p);
        p[i] = x[i] - h;
        const double fm = f(p);
        p[i] = x[i];
        out.gradient[i] = (fp - fm) / (2.0 * h);
        out.hessian(i, i) = (fp - 2.0 * out.value + fm) / (h * h);
    }
    for (int i = 0; i < d; ++i) {
        const double hi = scaled_step(base, x[i]);
        for (int j = i + 1; j < d; ++j) {
            const double hj = scaled_step(base, x[j]);
            p[i] = x[i] + hi;
            p[j] = x[j] + hj;
            const double fpp = f(p);
            p[j] = x[j] - hj;
            const double fpm = f(p);
            p[i] = x[i] - hi;
            const double fmm = f(p);
            p[j] = x[j] + hj;
            const double fmp = f(p);
            p[i] = x[i];
            p[j] = x[j];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            out.hessian(i, j) = v;
            out.hessian(j, i) = v;
        }
    }
    return out;
}

}  // namespace

FieldSet::FieldSet(int dim, ExpressionAst potential, std::vector<ExpressionAst> sigma_entries,
                   DerivativeMode mode)
    : dim_(dim), potential_(std::move(potential)), sigma_(std::move(sigma_entries)), mode_(mode) {
    if (dim_ < 1) throw std::invalid_argument("FieldSet dimension must be positive");
    if (sigma_.size() != static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_))
        throw std::invalid_argument("FieldSet needs d*d volatility entries");
}

FieldSet FieldSet::diagonal(int dim, ExpressionAst potential,
                            std::vector<ExpressionAst> diag_entries, DerivativeMode mode) {
    if (diag_entries.size() != static_cast<std::size_t>(dim))
        throw std::invalid_argument("diagonal FieldSet needs d entries");
    std::vector<ExpressionAst> entries;
    entries.reserve(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            entries.push_back(i == j ? diag_entries[static_cast<std::size_t>(i)]
                                     : ExpressionAst::constant(0.0, dim));
    return FieldSet(dim, std::move(potential), std::move(entries), mode);
}

double FieldSet::potential_value(const Eigen::VectorXd& x) const {
    return eval_value(potential_, x);
}

Eigen::VectorXd FieldSet::potential_gradient(const Eigen::VectorXd& x) const {
    if (mode_.analytic) return eval_gradient(potential_, x).g;
    return fd_derivatives_scaled(potential_, x, mode_.fd_step).gradient;
}

DerivOutput FieldSet::potential_derivs(const Eigen::VectorXd& x) const {
    if (mode_.analytic) return eval_with_derivatives(potential_, x);
    return fd_derivatives_scaled(potential_, x, mode_.fd_step);
}

Eigen::MatrixXd FieldSet::sigma_value(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd s(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) s(i, j) = eval_value(sigma_entry(i, j), x);
    return s;
}

void FieldSet::sigma_partials(const Eigen::VectorXd& x, Eigen::MatrixXd& S,
                              std::vector<Eigen::MatrixXd>& dS) const {
    S.resize(dim_, dim_);
    dS.assign(static_cast<std::size_t>(dim_), Eigen::MatrixXd(dim_, dim_));
    for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) {
            if (mode_.analytic) {
                DynDual v = eval_gradient(sigma_entry(i, j), x);
                S(i, j) = v.v;
                for (int l = 0; l < dim_; ++l) dS[static_cast<std::size_t>(l)](i, j) = v.g[l];
            } else {
                DerivOutput v = fd_derivatives_scaled(sigma_entry(i, j), x, mode_.fd_step);
                S(i, j) = v.value;
                for (int l = 0; l < dim_; ++l) dS[static_cast<std::size_t>(l)](i, j) = v.gradient[l];
            }
        }
    }
}

void FieldSet::validate_at(const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd s = sigma_value(x);
    const double det = s.determinant();
    if (!(std::abs(det) > 1e-12))
        throw ConditioningError("volatility matrix singular at probe point (|det| <= 1e-12)");
    const Eigen::MatrixXd m = s * s.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (!(eig.eigenvalues().minCoeff() > 1e-10))
        throw ConditioningError("diffusion matrix not positive definite at probe point");
}

double RotatedDiagonalSpec::orthogonality_defect() const {
    const Eigen::MatrixXd defect =
        u.transpose() * u - Eigen::MatrixXd::Identity(u.rows(), u.cols());
    return defect.cwiseAbs().maxCoeff();
}

std::vector<ExpressionAst> assemble_rotated_diagonal(const RotatedDiagonalSpec& spec) {
    const int d = spec.dim();
    if (spec.u.cols() != d || static_cast<int>(spec.diag.size()) != d)
        throw std::invalid_argument("rotated-diagonal spec needs square U and d diagonal entries");
    if (!(spec.orthogonality_defect() < 1e-12))
        throw std::invalid_argument("rotated-diagonal frame U is not orthogonal (tol 1e-12)");

    std::vector<ExpressionAst> entries;
    entries.reserve(static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            ExpressionAst e;
            for (int k = 0; k < d; ++k) {
                ExpressionAst term =
                    ExpressionAst::scale(spec.u(i, k) * spec.u(j, k), spec.diag[static_cast<std::size_t>(k)]);
                e = (k == 0) ? term : ExpressionAst::add(e, term);
            }
            entries.push_back(std::move(e));
        }
    }
    return entries;
}

}  // namespace revsde::expr
