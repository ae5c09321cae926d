#pragma once

#include "revsde/expr/ast.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace revsde::expr {

// Raised when a volatility matrix is singular (or numerically too close to it)
// at a probe point.
struct ConditioningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DerivOutput {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

// Exact value/gradient/Hessian via second-order forward-mode arithmetic.
DerivOutput eval_with_derivatives(const ExpressionAst& ast, const Eigen::VectorXd& x);

// Central-difference value/gradient/Hessian with uniform step h (O(h^2)).
// Serves as the independent cross-check for the analytic path.
DerivOutput fd_derivatives(const ExpressionAst& ast, const Eigen::VectorXd& x, double h);

struct DerivativeMode {
    bool analytic = true;
    double fd_step = 1e-5;  // base step; scaled by max(1,|x_i|) per coordinate

    static DerivativeMode analytic_mode() { return {true, 1e-5}; }
    static DerivativeMode finite_difference(double h) { return {false, h}; }
};

// Potential V: R^d -> R plus volatility sigma: R^d -> R^{d x d}, with
// derivative access up to second order. Immutable after construction.
class FieldSet {
  public:
    FieldSet(int dim, ExpressionAst potential, std::vector<ExpressionAst> sigma_entries,
             DerivativeMode mode = DerivativeMode::analytic_mode());

    static FieldSet diagonal(int dim, ExpressionAst potential,
                             std::vector<ExpressionAst> diag_entries,
                             DerivativeMode mode = DerivativeMode::analytic_mode());

    int dim() const { return dim_; }
    const ExpressionAst& potential() const { return potential_; }
    const ExpressionAst& sigma_entry(int i, int j) const {
        return sigma_[static_cast<std::size_t>(i * dim_ + j)];
    }
    const std::vector<ExpressionAst>& sigma_entries() const { return sigma_; }
    const DerivativeMode& mode() const { return mode_; }

    double potential_value(const Eigen::VectorXd& x) const;
    Eigen::VectorXd potential_gradient(const Eigen::VectorXd& x) const;
    DerivOutput potential_derivs(const Eigen::VectorXd& x) const;

    Eigen::MatrixXd sigma_value(const Eigen::VectorXd& x) const;
    // S(i,j) = sigma_ij(x), dS[l](i,j) = d sigma_ij / d x_l
    void sigma_partials(const Eigen::VectorXd& x, Eigen::MatrixXd& S,
                        std::vector<Eigen::MatrixXd>& dS) const;

    // Checks |det sigma(x)| > 1e-12 and lambda_min(sigma sigma^T) > 1e-10;
    // throws ConditioningError otherwise.
    void validate_at(const Eigen::VectorXd& x) const;

  private:
    int dim_;
    ExpressionAst potential_;
    std::vector<ExpressionAst> sigma_;
    DerivativeMode mode_;
};

// Constant orthogonal frame U with diagonal entry expressions l_k(x);
// assembles sigma(x) = U diag(l(x)) U^T.
struct RotatedDiagonalSpec {
    Eigen::MatrixXd u;
    std::vector<ExpressionAst> diag;

    int dim() const { return static_cast<int>(u.rows()); }
    // ||U^T U - I||_inf; must be < 1e-12 for assembly.
    double orthogonality_defect() const;
};

// Entry (i,j) of the result is sum_k U_ik l_k(x) U_jk, built structurally so
// derivative access composes linearly. Throws std::invalid_argument when U is
// not orthogonal to tolerance.
std::vector<ExpressionAst> assemble_rotated_diagonal(const RotatedDiagonalSpec& spec);

}  // namespace revsde::expr
