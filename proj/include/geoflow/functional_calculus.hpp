#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"

namespace geoflow {

using cdouble = std::complex<double>;

class ShiftedSystem;

/// Solves (zeta - T) X = R for one fixed zeta.
class ResolventFactor {
public:
    virtual ~ResolventFactor() = default;
    virtual Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const = 0;
};

/// Linear operator on C^N with Hilbert structure <x, y> = y^H H x.
class SpectralOperator {
public:
    virtual ~SpectralOperator() = default;
    virtual Eigen::Index dim() const = 0;
    virtual Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const = 0;
    /// H X.
    virtual Eigen::MatrixXcd weight(const Eigen::MatrixXcd& X) const = 0;
    virtual std::unique_ptr<ResolventFactor> factor(cdouble zeta) const = 0;
    /// [R(iy) + R(-iy)] X; overridden where one factorization serves both points.
    virtual Eigen::MatrixXcd resolvent_pair_imaginary(double y, const Eigen::MatrixXcd& X) const;
    /// Lower bound on the smallest nonzero |eigenvalue| and upper bound on |eigenvalue|.
    virtual std::pair<double, double> spectral_bounds() const = 0;
    virtual Eigen::MatrixXcd dense() const;

    double norm(const Eigen::VectorXcd& x) const;
    double inner_real(const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) const;
};

/// Explicit matrix with a real symmetric positive-definite weight (identity by default).
class DenseOperator : public SpectralOperator {
public:
    explicit DenseOperator(Eigen::MatrixXcd T, std::optional<Eigen::MatrixXd> H = std::nullopt);
    Eigen::Index dim() const override { return T_.rows(); }
    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const override { return T_ * X; }
    Eigen::MatrixXcd weight(const Eigen::MatrixXcd& X) const override { return H_ * X; }
    std::unique_ptr<ResolventFactor> factor(cdouble zeta) const override;
    std::pair<double, double> spectral_bounds() const override;
    Eigen::MatrixXcd dense() const override { return T_; }

private:
    Eigen::MatrixXcd T_;
    Eigen::MatrixXcd H_;
    std::pair<double, double> bounds_;
};

/// L = b * M^{-1} K_B acting on vertex values (sectorial).
class SectorialOperator : public SpectralOperator {
public:
    explicit SectorialOperator(const EllipticOperator& L);
    Eigen::Index dim() const override { return n_; }
    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const override;
    Eigen::MatrixXcd weight(const Eigen::MatrixXcd& X) const override;
    std::unique_ptr<ResolventFactor> factor(cdouble zeta) const override;
    std::pair<double, double> spectral_bounds() const override { return bounds_; }

private:
    Eigen::Index n_;
    std::shared_ptr<const Assembly> assembly_;
    SparseMatrixC K_;
    SparseMatrixC Mb_;  ///< M b^{-1}
    Eigen::VectorXcd b_;
    std::pair<double, double> bounds_;
};

/// Dirac block Pi_B = Gamma + B1 Gamma^* B2 on vertex values (+) per-triangle covectors,
/// with Gamma(u, w) = (0, grad u) and Gamma^*(u, w) = (-div w, 0).
class DiracOperator : public SpectralOperator {
public:
    DiracOperator(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                  std::optional<Eigen::VectorXcd> b = std::nullopt);
    /// Unperturbed block (B1 = B2 = identity).
    explicit DiracOperator(std::shared_ptr<const Assembly> assembly);

    Eigen::Index dim() const override { return n_ + 2 * nt_; }
    Eigen::Index num_vertices() const { return n_; }
    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const override;
    Eigen::MatrixXcd weight(const Eigen::MatrixXcd& X) const override;
    std::unique_ptr<ResolventFactor> factor(cdouble zeta) const override;
    Eigen::MatrixXcd resolvent_pair_imaginary(double y, const Eigen::MatrixXcd& X) const override;
    std::pair<double, double> spectral_bounds() const override { return bounds_; }

    Eigen::MatrixXcd gamma(const Eigen::MatrixXcd& X) const;
    Eigen::MatrixXcd gamma_star(const Eigen::MatrixXcd& X) const;
    Eigen::MatrixXcd B1(const Eigen::MatrixXcd& X) const;
    Eigen::MatrixXcd B2(const Eigen::MatrixXcd& X) const;

    /// Stack (u, w) into one vector.
    Eigen::VectorXcd pack(const Eigen::VectorXcd& u, const Eigen::VectorXcd& w) const;
    const Assembly& assembly() const { return *assembly_; }
    bool real_coefficients() const { return real_; }
    /// sqrt(b div B grad)-side data used by the square root.
    Eigen::MatrixXcd stiffness_apply(const Eigen::MatrixXcd& U) const { return K_ * U; }
    /// 2 (y^2 M b^{-1} + K_B)^{-1} K_B U, the first block of -[R(iy)+R(-iy)](0, grad U).
    Eigen::MatrixXcd sqrt_integrand(double y, const Eigen::MatrixXcd& U) const;
    /// D^T W B w, the vertex load of a covector field.
    Eigen::MatrixXcd covector_load(const Eigen::MatrixXcd& W) const;

private:
    std::shared_ptr<const Assembly> assembly_;
    Eigen::Index n_, nt_;
    SparseMatrix D_;
    SparseMatrixC Dc_;
    Eigen::VectorXd W_;
    std::vector<Eigen::Matrix2cd> Bt_;
    Eigen::VectorXcd b_;
    SparseMatrixC K_;   ///< D^T W B D
    SparseMatrixC Mb_;  ///< M b^{-1}
    SparseMatrix Kr_, Mr_;
    bool real_;
    std::pair<double, double> bounds_;

    Eigen::MatrixXcd apply_B(const Eigen::MatrixXcd& W) const;
    ShiftedSystem shifted(cdouble s) const;
};

/// Holomorphic function on the open bisector with |psi| <= c |z|^a / (1 + |z|^{2a}).
struct PsiFunction {
    std::function<cdouble(cdouble)> eval;
    double alpha = 1.0;
    double bound = 1.0;
    /// Optional exact partial fractions psi(z) = sum_j c_j / (z - p_j) (pole, residue).
    std::vector<std::pair<cdouble, cdouble>> partial_fractions;
    const char* name = "psi";
};

/// z / (1 + z^2).
PsiFunction psi_canonical();
/// z^2 / (1 + z^2)^2.
PsiFunction psi_squared();
/// sqrt(z^2) / (1 + z^2), with sqrt(z^2) = z sgn(Re z); not rational.
PsiFunction psi_abs();
std::vector<PsiFunction> shipped_psi_functions();

struct QuadratureOptions {
    double tolerance = 1e-11;  ///< relative, in the Hilbert norm
    double h0 = 0.5;
    int max_halvings = 8;
    int threads = 1;
};

struct QuadratureInfo {
    double error_estimate = 0.0;
    int nodes = 0;
    double step = 0.0;
};

/// T with sector data: spectrum inside the closed bisector S_omega, contour angle mu.
struct BisectorialOperator {
    std::shared_ptr<const SpectralOperator> action;
    double omega = 0.0;
    double mu = 0.0;
    double resolvent_bound = 0.0;
    /// Dense eigenvalues when computed (desk-scale dimensions), else empty.
    Eigen::VectorXcd eigenvalues;
};

/// Wraps T, checks the spectrum against S_omega (dense eigenvalues at desk scale, where
/// omega may be widened to cover the measured spectrum), sets mu = (omega + pi/2)/2 and
/// estimates C_mu on contour samples.
BisectorialOperator make_bisectorial(std::shared_ptr<const SpectralOperator> T, double omega,
                                     bool dense_check = true);

/// Surrogate sector angle for b div B grad: arctan(|skew part| / kappa) plus max |arg b|.
double estimate_omega(const CoefficientField& B, const std::optional<Eigen::VectorXcd>& b);

/// (zeta - T)^{-1}, rejecting zeta inside S_omega or within 1e-10 of the spectrum.
class Resolvent {
public:
    Resolvent(const BisectorialOperator& T, cdouble zeta);
    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const { return factor_->solve(X); }
    cdouble zeta() const { return zeta_; }

private:
    cdouble zeta_;
    std::unique_ptr<ResolventFactor> factor_;
};
Resolvent resolvent(const BisectorialOperator& T, cdouble zeta);

/// psi(T) U by the contour integral over the boundary of S_mu.
Eigen::MatrixXcd apply_psi(const BisectorialOperator& T, const PsiFunction& psi, const Eigen::MatrixXcd& U,
                           const QuadratureOptions& opt = {}, QuadratureInfo* info = nullptr);

/// sgn(T) U = -(1/pi) int_0^inf [R(iy) + R(-iy)] U dy.
Eigen::MatrixXcd apply_sgn(const BisectorialOperator& T, const Eigen::MatrixXcd& U, const QuadratureOptions& opt = {},
                           QuadratureInfo* info = nullptr);
/// Riesz projection onto N(T) over a circle inside the spectral gap at 0.
Eigen::MatrixXcd apply_null_projection(const BisectorialOperator& T, const Eigen::MatrixXcd& U, int nodes = 64);

struct SgnProjections {
    Eigen::MatrixXcd chi_plus;
    Eigen::MatrixXcd chi_minus;
    Eigen::MatrixXcd null_projection;
};
/// chi_+/-(T) U and P_N U (columns of U); pass the identity for the full matrices.
SgnProjections sgn_projections(const BisectorialOperator& T, const Eigen::MatrixXcd& U,
                               const QuadratureOptions& opt = {});

struct QuadraticEstimate {
    double value = 0.0;
    double error_estimate = 0.0;
};
/// int over t_range of ||psi(tT)u||^2 dt/t by trapezoid in log t.
QuadraticEstimate quadratic_estimate(const BisectorialOperator& T, const PsiFunction& psi, const Eigen::VectorXcd& u,
                                     std::pair<double, double> t_range, const QuadratureOptions& opt = {});

/// sqrt(b div B grad) evaluated through sgn(Pi_B)(0, grad u).
class SqrtOperator {
public:
    SqrtOperator(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                 std::optional<Eigen::VectorXcd> b = std::nullopt, QuadratureOptions opt = {});
    explicit SqrtOperator(const EllipticOperator& L, QuadratureOptions opt = {});

    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& U, QuadratureInfo* info = nullptr) const;
    Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const { return apply(Eigen::MatrixXcd(u)).col(0); }
    /// Dense matrix (columns = images of unit vectors).
    Eigen::MatrixXcd dense() const;
    const DiracOperator& dirac() const { return *dirac_; }
    Eigen::Index dim() const { return dirac_->num_vertices(); }

private:
    std::shared_ptr<const DiracOperator> dirac_;
    QuadratureOptions opt_;
};
SqrtOperator sqrt_op(const EllipticOperator& L, QuadratureOptions opt = {});

/// Trapezoid rule on a line: nodes lo + k h, halving h until two levels agree.
/// With adaptive tails, [lo, hi] is grown from `center` until F falls below 1e-17 of its peak.
Eigen::MatrixXcd trapezoid_line(const std::function<Eigen::MatrixXcd(double)>& F,
                                const std::function<double(const Eigen::MatrixXcd&)>& norm, double lo, double hi,
                                bool adaptive_tails, double center, double scale, const QuadratureOptions& opt,
                                QuadratureInfo* info);

} // namespace geoflow
