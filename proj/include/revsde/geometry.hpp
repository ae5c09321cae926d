#pragma once

#include "revsde/expr/fieldset.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace revsde::geometry {

// Riemannian package induced by sigma at a point: diffusion tensor M = sigma
// sigma^T, metric g = M^{-1}, volume density omega = det(g), Christoffel
// symbols of the Levi-Civita connection and their trace.
struct GeometryPoint {
    Eigen::VectorXd x;
    Eigen::MatrixXd M;
    Eigen::MatrixXd g;
    double omega = 0.0;
    double sqrt_omega = 0.0;
    std::vector<Eigen::MatrixXd> christoffel;  // christoffel[k](i,j) = Gamma^k_{ij}
    Eigen::VectorXd contracted;                // contracted[k] = Gamma^i_{ik}
};

GeometryPoint geometry_at(const expr::FieldSet& fields, const Eigen::VectorXd& x);

// Matrix field with first-order entry partials; the abstraction the divergence
// operators consume. Implementations exist for sigma, sigma^T, M = sigma
// sigma^T, expression grids, and quadrature-defined averaged volatilities.
class MatrixField {
  public:
    virtual ~MatrixField() = default;
    virtual int dim() const = 0;
    // Fills A(i,j) and dA[l](i,j) = d A_ij / d x_l.
    virtual void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                      std::vector<Eigen::MatrixXd>& dA) const = 0;
};

class SigmaField final : public MatrixField {
  public:
    explicit SigmaField(const expr::FieldSet& fields) : fields_(&fields) {}
    int dim() const override { return fields_->dim(); }
    void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
              std::vector<Eigen::MatrixXd>& dA) const override;

  private:
    const expr::FieldSet* fields_;
};

class SigmaTransposeField final : public MatrixField {
  public:
    explicit SigmaTransposeField(const expr::FieldSet& fields) : fields_(&fields) {}
    int dim() const override { return fields_->dim(); }
    void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
              std::vector<Eigen::MatrixXd>& dA) const override;

  private:
    const expr::FieldSet* fields_;
};

class DiffusionField final : public MatrixField {
  public:
    explicit DiffusionField(const expr::FieldSet& fields) : fields_(&fields) {}
    int dim() const override { return fields_->dim(); }
    void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
              std::vector<Eigen::MatrixXd>& dA) const override;

  private:
    const expr::FieldSet* fields_;
};

class AstMatrixField final : public MatrixField {
  public:
    AstMatrixField(std::vector<expr::ExpressionAst> entries, int dim,
                   expr::DerivativeMode mode = expr::DerivativeMode::analytic_mode());
    int dim() const override { return dim_; }
    void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
              std::vector<Eigen::MatrixXd>& dA) const override;

  private:
    std::vector<expr::ExpressionAst> entries_;
    int dim_;
    expr::DerivativeMode mode_;
};

// Euclidean row divergence (no geometry): (div A)_j = d_i A_ji.
Eigen::VectorXd row_euclid_div(const MatrixField& A, const Eigen::VectorXd& x);

// Row covariant divergence: (div_c A)_j = d_i A_ji + Gamma^i_{ik} A_jk.
Eigen::VectorXd row_cov_div(const expr::FieldSet& fields, const MatrixField& A,
                            const Eigen::VectorXd& x);

// [div_c M - sigma div_c sigma^T] - [div M - sigma div sigma^T]; zero for all
// smooth sigma (the Christoffel contributions cancel).
Eigen::VectorXd cancellation_gap(const expr::FieldSet& fields, const Eigen::VectorXd& x);

// Covariant drift correction sqrt(omega)^{-1} d_alpha (sqrt(omega) M^{alpha
// mu}), with d log omega obtained from Jacobi's formula so the route stays
// independent of the Christoffel computation. Equals the row covariant
// divergence of M.
Eigen::VectorXd graham_correction(const expr::FieldSet& fields, const Eigen::VectorXd& x);

// First-order coefficient of the Laplace-Beltrami operator: -M^{kj}
// Gamma^i_{kj}.
Eigen::VectorXd laplace_beltrami_drift(const expr::FieldSet& fields, const Eigen::VectorXd& x);

// d_j log omega via Jacobi's formula trace(g^{-1} d_j g).
Eigen::VectorXd log_omega_gradient(const expr::FieldSet& fields, const Eigen::VectorXd& x);

}  // namespace revsde::geometry
