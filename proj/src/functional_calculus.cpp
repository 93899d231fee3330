#include "geoflow/functional_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/SparseLU>

#include "geoflow/coefficients.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/random.hpp"
#include "geoflow/spectral.hpp"

namespace geoflow {

namespace {

constexpr double pi = std::numbers::pi;
const cdouble I1(0.0, 1.0);

class DenseFactor : public ResolventFactor {
public:
    explicit DenseFactor(const Eigen::MatrixXcd& A) : lu_(A) {}
    Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const override { return lu_.solve(rhs); }

private:
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

using ComplexLU = Eigen::SparseLU<SparseMatrixC, Eigen::COLAMDOrdering<int>>;

std::shared_ptr<ComplexLU> factor_complex(const SparseMatrixC& A) {
    auto lu = std::make_shared<ComplexLU>();
    lu->compute(A);
    if (lu->info() != Eigen::Success) throw SpectrumProximity("resolvent: singular shifted system");
    return lu;
}

Eigen::MatrixXcd solve_columns(const ComplexLU& lu, const Eigen::MatrixXcd& B) {
    Eigen::MatrixXcd X(B.rows(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j) X.col(j) = lu.solve(B.col(j));
    return X;
}

Eigen::MatrixXcd solve_mass_columns(const GradDivPair& pair, const Eigen::MatrixXcd& B) {
    Eigen::MatrixXcd X(B.rows(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j) X.col(j) = pair.solve_mass(Eigen::VectorXcd(B.col(j)));
    return X;
}

} // namespace

/// Factorization of s Mb - K for a Laplacian-type K (1^T K = 0). Its solutions are
/// split as c 1 + v with m^T v = 0, m = Mb^T 1: the constant c follows exactly from the
/// load, and v depends smoothly on s, so |s| is floored at `floor` for v alone. This
/// avoids the cancellation of a nearly singular factorization at tiny shifts.
class ShiftedSystem {
public:
    ShiftedSystem(cdouble s, double floor, const SparseMatrixC& K, const SparseMatrixC& Mb, const SparseMatrix* Kr,
                  const SparseMatrix* Mr) {
        m_ = Mb.transpose() * Eigen::VectorXcd::Ones(K.rows());
        mass_ = m_.sum();
        const cdouble se = std::abs(s) >= floor ? s : floor * s / std::abs(s);
        if (Kr && se.imag() == 0.0 && se.real() < 0.0) {
            // -(s M - K) = K + |s| M is SPD.
            ldlt_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(SparseMatrix(*Kr - se.real() * *Mr));
            if (ldlt_->info() != Eigen::Success) throw SpectrumProximity("resolvent: factorization failed");
        } else {
            lu_ = factor_complex(SparseMatrixC(se * Mb - K));
        }
    }

    /// Mean-zero part v of the solution of (s Mb - K) u = r.
    Eigen::MatrixXcd mean_zero_solve(const Eigen::MatrixXcd& r) const {
        Eigen::MatrixXcd u(r.rows(), r.cols());
        if (ldlt_) {
            for (Eigen::Index j = 0; j < r.cols(); ++j) {
                u.col(j).real() = -ldlt_->solve(Eigen::VectorXd(r.col(j).real()));
                u.col(j).imag() = -ldlt_->solve(Eigen::VectorXd(r.col(j).imag()));
            }
        } else {
            u = solve_columns(*lu_, r);
        }
        for (Eigen::Index j = 0; j < u.cols(); ++j) u.col(j).array() -= (m_.transpose() * u.col(j)).value() / mass_;
        return u;
    }

    /// m^T f / mass for each column.
    Eigen::RowVectorXcd mean(const Eigen::MatrixXcd& f) const { return (m_.transpose() * f) / mass_; }

private:
    std::shared_ptr<ComplexLU> lu_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
    Eigen::VectorXcd m_;
    cdouble mass_;
};

namespace {

/// Smallest nonzero and largest |lambda| of Delta for the assembly (lower/upper bounds).
std::pair<double, double> laplacian_bounds(const Assembly& a) {
    const auto& M = a.spaces.mass;
    const SparseMatrix K =
        stiffness_matrix_real(a, std::vector<Eigen::Matrix2d>(a.triangles.size(), Eigen::Matrix2d::Identity()));
    const auto spec = eigensolve_pencil(K, M, 2);
    // Gershgorin for K, a lower bound for M from the element mass spectra.
    double kmax = 0.0;
    for (int k = 0; k < K.outerSize(); ++k) {
        double row = 0.0;
        for (SparseMatrix::InnerIterator it(K, k); it; ++it) row += std::abs(it.value());
        kmax = std::max(kmax, row);
    }
    double mmin;
    if (a.spaces.mass_kind == MassKind::lumped) {
        mmin = M.diagonal().minCoeff();
    } else {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(a.spaces.num_vertices());
        for (std::size_t t = 0; t < a.triangles.size(); ++t)
            for (int v : a.triangles[t]) acc[v] += a.geometry[t].area / 12.0;
        mmin = acc.minCoeff();
    }
    return {spec.values[1], kmax / mmin};
}

} // namespace

// ---------------------------------------------------------------------------
// SpectralOperator

Eigen::MatrixXcd SpectralOperator::resolvent_pair_imaginary(double y, const Eigen::MatrixXcd& X) const {
    return factor(cdouble(0.0, y))->solve(X) + factor(cdouble(0.0, -y))->solve(X);
}

Eigen::MatrixXcd SpectralOperator::dense() const {
    return apply(Eigen::MatrixXcd::Identity(dim(), dim()));
}

double SpectralOperator::norm(const Eigen::VectorXcd& x) const {
    return std::sqrt(std::abs(x.dot(weight(x).col(0))));
}

double SpectralOperator::inner_real(const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) const {
    return y.dot(weight(x).col(0)).real();
}

namespace {

double hilbert_norm(const SpectralOperator& T, const Eigen::MatrixXcd& X) {
    const Eigen::MatrixXcd HX = T.weight(X);
    double s = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) s += std::abs(X.col(j).dot(HX.col(j)));
    return std::sqrt(s);
}

} // namespace

// ---------------------------------------------------------------------------
// DenseOperator

DenseOperator::DenseOperator(Eigen::MatrixXcd T, std::optional<Eigen::MatrixXd> H) : T_(std::move(T)) {
    if (T_.rows() != T_.cols() || T_.rows() == 0) throw ValidationError("dense operator: matrix must be square");
    if (H) H_ = H->cast<cdouble>();
    else H_ = Eigen::MatrixXcd::Identity(T_.rows(), T_.rows());
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(T_, false);
    const Eigen::VectorXd mags = es.eigenvalues().cwiseAbs();
    const double top = mags.maxCoeff();
    double low = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < mags.size(); ++i)
        if (mags[i] > 1e-10 * std::max(top, 1e-300)) low = std::min(low, mags[i]);
    if (!std::isfinite(low)) low = 1.0;
    bounds_ = {low, std::max(top, low)};
}

std::unique_ptr<ResolventFactor> DenseOperator::factor(cdouble zeta) const {
    const Eigen::MatrixXcd A = zeta * Eigen::MatrixXcd::Identity(dim(), dim()) - T_;
    return std::make_unique<DenseFactor>(A);
}

std::pair<double, double> DenseOperator::spectral_bounds() const { return bounds_; }

// ---------------------------------------------------------------------------
// SectorialOperator

namespace {

class SectorialFactor : public ResolventFactor {
public:
    SectorialFactor(cdouble zeta, double floor, const SparseMatrixC& K, const SparseMatrixC& Mb)
        : zeta_(zeta), system_(zeta, floor, K, Mb, nullptr, nullptr), Mb_(&Mb) {}
    Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const override {
        // (zeta Mb - K) x = Mb f; the constant part of x is (m^T f) / (zeta mass).
        Eigen::MatrixXcd x = system_.mean_zero_solve(*Mb_ * rhs);
        x.rowwise() += system_.mean(rhs) / zeta_;
        return x;
    }

private:
    cdouble zeta_;
    ShiftedSystem system_;
    const SparseMatrixC* Mb_;
};

SparseMatrixC mass_over_b(const SparseMatrix& M, const Eigen::VectorXcd& b) {
    SparseMatrixC Mb = M.cast<cdouble>();
    return Mb * b.cwiseInverse().asDiagonal();
}

} // namespace

SectorialOperator::SectorialOperator(const EllipticOperator& L)
    : n_(L.dimension()), assembly_(L.assembly_ptr()), K_(L.stiffness_complex()) {
    b_ = L.multiplier() ? *L.multiplier() : Eigen::VectorXcd::Ones(n_);
    Mb_ = mass_over_b(L.spaces().mass, b_);
    const auto [lam1, lam_max] = laplacian_bounds(*assembly_);
    const auto& A = L.coefficients();
    const double bmin = b_.real().minCoeff(), bmax = b_.cwiseAbs().maxCoeff();
    bounds_ = {0.5 * A.kappa * bmin * lam1 * (A.kappa / A.Lambda), A.Lambda * bmax * lam_max};
}

Eigen::MatrixXcd SectorialOperator::apply(const Eigen::MatrixXcd& X) const {
    return b_.asDiagonal() * solve_mass_columns(assembly_->pair, K_ * X);
}

Eigen::MatrixXcd SectorialOperator::weight(const Eigen::MatrixXcd& X) const {
    return assembly_->spaces.mass.cast<cdouble>() * X;
}

std::unique_ptr<ResolventFactor> SectorialOperator::factor(cdouble zeta) const {
    if (std::abs(zeta) == 0.0) throw SpectrumProximity("resolvent: zeta = 0 lies in the spectrum");
    return std::make_unique<SectorialFactor>(zeta, 1e-12 * bounds_.first, K_, Mb_);
}

// ---------------------------------------------------------------------------
// DiracOperator

namespace {

class DiracFactor : public ResolventFactor {
public:
    DiracFactor(const DiracOperator& op, cdouble zeta, ShiftedSystem system, const SparseMatrixC& Mb,
                const SparseMatrixC& Dc)
        : op_(op), zeta_(zeta), system_(std::move(system)), Mb_(&Mb), Dc_(&Dc) {}

    Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const override {
        const Eigen::Index n = op_.num_vertices();
        const Eigen::MatrixXcd f = rhs.topRows(n);
        const Eigen::MatrixXcd g = rhs.bottomRows(rhs.rows() - n);
        // (zeta^2 M b^{-1} - K_B) u = zeta M b^{-1} f + D^T W B g,  w = (g + D u) / zeta.
        const Eigen::MatrixXcd v = system_.mean_zero_solve(zeta_ * (*Mb_ * f) + op_.covector_load(g));
        Eigen::MatrixXcd out(rhs.rows(), rhs.cols());
        out.topRows(n) = v;
        out.topRows(n).rowwise() += system_.mean(f) / zeta_;
        out.bottomRows(rhs.rows() - n) = (g + *Dc_ * v) / zeta_;
        return out;
    }

private:
    const DiracOperator& op_;
    cdouble zeta_;
    ShiftedSystem system_;
    const SparseMatrixC* Mb_;
    const SparseMatrixC* Dc_;
};

} // namespace

DiracOperator::DiracOperator(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                             std::optional<Eigen::VectorXcd> b)
    : assembly_(std::move(assembly)) {
    n_ = assembly_->spaces.num_vertices();
    nt_ = assembly_->spaces.num_triangles();
    if (B.num_triangles() != nt_) throw ValidationError("dirac: coefficient field does not match the mesh");
    B.validate();
    D_ = assembly_->pair.gradient();
    Dc_ = D_.cast<cdouble>();
    W_ = assembly_->spaces.covector_weights;
    Bt_ = B.tensors;
    b_ = b ? *b : Eigen::VectorXcd::Ones(n_);
    if (b_.size() != n_ || !(b_.real().minCoeff() > 0.0)) throw EllipticityError("dirac: multiplier needs Re b > 0");
    K_ = stiffness_matrix(*assembly_, B);
    Mb_ = mass_over_b(assembly_->spaces.mass, b_);
    real_ = B.real_symmetric && !b;
    if (real_) {
        Kr_ = K_.real();
        Mr_ = assembly_->spaces.mass;
    }
    const auto [lam1, lam_max] = laplacian_bounds(*assembly_);
    const double bmin = b_.real().minCoeff(), bmax = b_.cwiseAbs().maxCoeff();
    const double lo = real_ ? B.kappa * lam1 : 0.5 * B.kappa * bmin * lam1 * (B.kappa / B.Lambda);
    bounds_ = {std::sqrt(lo), std::sqrt(B.Lambda * bmax * lam_max)};
}

DiracOperator::DiracOperator(std::shared_ptr<const Assembly> assembly)
    : DiracOperator(assembly, CoefficientField::identity(assembly->spaces.num_triangles())) {}

Eigen::MatrixXcd DiracOperator::apply_B(const Eigen::MatrixXcd& W) const {
    Eigen::MatrixXcd out(W.rows(), W.cols());
    for (Eigen::Index t = 0; t < nt_; ++t) out.middleRows(2 * t, 2) = Bt_[t] * W.middleRows(2 * t, 2);
    return out;
}

Eigen::MatrixXcd DiracOperator::covector_load(const Eigen::MatrixXcd& W) const {
    return Dc_.transpose() * (W_.cast<cdouble>().asDiagonal() * apply_B(W));
}

Eigen::MatrixXcd DiracOperator::apply(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out(X.rows(), X.cols());
    out.topRows(n_) = b_.asDiagonal() * solve_mass_columns(assembly_->pair, covector_load(X.bottomRows(2 * nt_)));
    out.bottomRows(2 * nt_) = Dc_ * X.topRows(n_);
    return out;
}

Eigen::MatrixXcd DiracOperator::weight(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out(X.rows(), X.cols());
    out.topRows(n_) = assembly_->spaces.mass.cast<cdouble>() * X.topRows(n_);
    out.bottomRows(2 * nt_) = W_.cast<cdouble>().asDiagonal() * X.bottomRows(2 * nt_);
    return out;
}

Eigen::MatrixXcd DiracOperator::gamma(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(X.rows(), X.cols());
    out.bottomRows(2 * nt_) = Dc_ * X.topRows(n_);
    return out;
}

Eigen::MatrixXcd DiracOperator::gamma_star(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(X.rows(), X.cols());
    const Eigen::MatrixXcd load = Dc_.transpose() * (W_.cast<cdouble>().asDiagonal() * X.bottomRows(2 * nt_));
    out.topRows(n_) = solve_mass_columns(assembly_->pair, load);
    return out;
}

Eigen::MatrixXcd DiracOperator::B1(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out = X;
    out.topRows(n_) = b_.asDiagonal() * X.topRows(n_);
    return out;
}

Eigen::MatrixXcd DiracOperator::B2(const Eigen::MatrixXcd& X) const {
    Eigen::MatrixXcd out = X;
    out.bottomRows(2 * nt_) = apply_B(X.bottomRows(2 * nt_));
    return out;
}

Eigen::VectorXcd DiracOperator::pack(const Eigen::VectorXcd& u, const Eigen::VectorXcd& w) const {
    if (u.size() != n_ || w.size() != 2 * nt_) throw ValidationError("dirac: block sizes do not match");
    Eigen::VectorXcd x(dim());
    x << u, w;
    return x;
}

ShiftedSystem DiracOperator::shifted(cdouble s) const {
    return ShiftedSystem(s, 1e-12 * bounds_.first * bounds_.first, K_, Mb_, real_ ? &Kr_ : nullptr,
                         real_ ? &Mr_ : nullptr);
}

std::unique_ptr<ResolventFactor> DiracOperator::factor(cdouble zeta) const {
    if (std::abs(zeta) == 0.0) throw SpectrumProximity("resolvent: zeta = 0 lies in the spectrum");
    return std::make_unique<DiracFactor>(*this, zeta, shifted(zeta * zeta), Mb_, Dc_);
}

Eigen::MatrixXcd DiracOperator::resolvent_pair_imaginary(double y, const Eigen::MatrixXcd& X) const {
    // With A = -y^2 M b^{-1} - K_B:  [R(iy) + R(-iy)](f, g) = (2 A^{-1} D^T W B g, 2 D A^{-1} M b^{-1} f).
    // The first load is orthogonal to the constants and D annihilates them, so only the
    // mean-zero parts of the two solutions enter.
    const ShiftedSystem sys = shifted(cdouble(-y * y, 0.0));
    Eigen::MatrixXcd rhs(n_, 2 * X.cols());
    rhs.leftCols(X.cols()) = covector_load(X.bottomRows(2 * nt_));
    rhs.rightCols(X.cols()) = Mb_ * X.topRows(n_);
    const Eigen::MatrixXcd sol = sys.mean_zero_solve(rhs);
    Eigen::MatrixXcd out(X.rows(), X.cols());
    out.topRows(n_) = 2.0 * sol.leftCols(X.cols());
    out.bottomRows(2 * nt_) = 2.0 * (Dc_ * sol.rightCols(X.cols()));
    return out;
}

Eigen::MatrixXcd DiracOperator::sqrt_integrand(double y, const Eigen::MatrixXcd& U) const {
    return -2.0 * shifted(cdouble(-y * y, 0.0)).mean_zero_solve(K_ * U);
}

// ---------------------------------------------------------------------------
// Psi functions

PsiFunction psi_canonical() {
    PsiFunction p;
    p.eval = [](cdouble z) { return z / (1.0 + z * z); };
    p.alpha = 1.0;
    p.bound = 2.0;
    p.partial_fractions = {{I1, 0.5}, {-I1, 0.5}};
    p.name = "z/(1+z^2)";
    return p;
}

PsiFunction psi_squared() {
    PsiFunction p;
    p.eval = [](cdouble z) {
        const cdouble d = 1.0 + z * z;
        return z * z / (d * d);
    };
    p.alpha = 2.0;
    p.bound = 4.0;
    p.name = "z^2/(1+z^2)^2";
    return p;
}

PsiFunction psi_abs() {
    PsiFunction p;
    p.eval = [](cdouble z) { return (z.real() >= 0.0 ? z : -z) / (1.0 + z * z); };
    p.alpha = 1.0;
    p.bound = 2.0;
    p.name = "sqrt(z^2)/(1+z^2)";
    return p;
}

std::vector<PsiFunction> shipped_psi_functions() { return {psi_canonical(), psi_squared(), psi_abs()}; }

// ---------------------------------------------------------------------------
// Sector data

double estimate_omega(const CoefficientField& B, const std::optional<Eigen::VectorXcd>& b) {
    double omega = B.real_symmetric ? 0.0 : sector_angle(B);
    if (b) {
        double arg = 0.0;
        for (Eigen::Index i = 0; i < b->size(); ++i) arg = std::max(arg, std::abs(std::arg((*b)[i])));
        omega += arg;
    }
    if (omega >= pi / 2.0 - 1e-3) throw EllipticityError("sector angle reaches pi/2; operator is not bisectorial");
    return omega;
}

namespace {

bool in_closed_bisector(cdouble z, double omega) {
    if (std::abs(z) == 0.0) return true;
    const double a = std::abs(std::arg(z));
    return std::min(a, pi - a) <= omega;
}

double folded_arg(cdouble z) {
    const double a = std::abs(std::arg(z));
    return std::min(a, pi - a);
}

} // namespace

BisectorialOperator make_bisectorial(std::shared_ptr<const SpectralOperator> T, double omega, bool dense_check) {
    if (!(omega >= 0.0) || omega >= pi / 2.0) throw ValidationError("bisectorial: omega must lie in [0, pi/2)");
    BisectorialOperator out;
    out.action = T;
    const Eigen::Index n = T->dim();
    if (dense_check && n <= 1500) {
        const Eigen::MatrixXcd A = T->dense();
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
        out.eigenvalues = es.eigenvalues();
        const double top = out.eigenvalues.cwiseAbs().maxCoeff();
        double measured = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(out.eigenvalues[i]) > 1e-9 * std::max(top, 1e-300))
                measured = std::max(measured, folded_arg(out.eigenvalues[i]));
        if (measured > omega + 1e-9) omega = std::min(measured + 0.01, pi / 2.0 - 1e-3);
        if (measured >= pi / 2.0 - 1e-3) throw EllipticityError("bisectorial: spectrum reaches the imaginary axis");
    }
    out.omega = omega;
    out.mu = 0.5 * (omega + pi / 2.0);

    // Resolvent bound |zeta| ||R(zeta)|| sampled along the contour rays.
    const auto [lo, hi] = T->spectral_bounds();
    CounterRng rng(0x72657362ULL);
    Eigen::MatrixXcd probes(n, 4);
    for (Eigen::Index j = 0; j < 4; ++j)
        for (Eigen::Index i = 0; i < n; ++i) probes(i, j) = {rng.normal(), rng.normal()};
    double cmu = 0.0;
    for (double r : {lo * 0.1, std::sqrt(lo * hi), hi * 10.0})
        for (double th : {out.mu, -out.mu, pi - out.mu, pi + out.mu}) {
            const cdouble z = std::polar(r, th);
            const Eigen::MatrixXcd X = T->factor(z)->solve(probes);
            for (Eigen::Index j = 0; j < 4; ++j)
                cmu = std::max(cmu, r * hilbert_norm(*T, X.col(j)) / hilbert_norm(*T, probes.col(j)));
        }
    out.resolvent_bound = cmu;
    return out;
}

Resolvent::Resolvent(const BisectorialOperator& T, cdouble zeta) : zeta_(zeta) {
    // With the spectrum known, invertibility is decided by proximity alone; otherwise the
    // sector is the only available certificate.
    if (T.eigenvalues.size() == 0 && in_closed_bisector(zeta, T.omega))
        throw SpectrumProximity("resolvent: zeta lies inside the closed bisector S_omega");
    for (Eigen::Index i = 0; i < T.eigenvalues.size(); ++i)
        if (std::abs(zeta - T.eigenvalues[i]) <= 1e-10 * std::max(1.0, std::abs(T.eigenvalues[i])))
            throw SpectrumProximity("resolvent: zeta within 1e-10 of an eigenvalue");
    factor_ = T.action->factor(zeta);
}

Resolvent resolvent(const BisectorialOperator& T, cdouble zeta) { return Resolvent(T, zeta); }

// ---------------------------------------------------------------------------
// Quadrature

Eigen::MatrixXcd trapezoid_line(const std::function<Eigen::MatrixXcd(double)>& F,
                                const std::function<double(const Eigen::MatrixXcd&)>& norm, double lo, double hi,
                                bool adaptive_tails, double center, double scale, const QuadratureOptions& opt,
                                QuadratureInfo* info) {
    double h = opt.h0;
    Eigen::MatrixXcd sum;
    int nodes = 0;
    auto accumulate = [&](const std::vector<double>& sigmas) {
        // Deterministic: node results are reduced in index order.
        const std::size_t chunk = static_cast<std::size_t>(std::max(opt.threads, 1)) * 4;
        for (std::size_t start = 0; start < sigmas.size(); start += chunk) {
            const std::size_t m = std::min(chunk, sigmas.size() - start);
            std::vector<Eigen::MatrixXcd> vals(m);
            parallel_for(m, opt.threads, [&](std::size_t i) { vals[i] = F(sigmas[start + i]); });
            for (auto& v : vals) {
                if (sum.size() == 0) sum = Eigen::MatrixXcd::Zero(v.rows(), v.cols());
                sum += v;
            }
        }
        nodes += static_cast<int>(sigmas.size());
    };

    if (adaptive_tails) {
        // Walk outward from the center until the integrand is negligible on both sides.
        double peak = 0.0;
        int left = 0, right = 0;
        auto eval_at = [&](double s) {
            Eigen::MatrixXcd v = F(s);
            const double nv = norm(v);
            peak = std::max(peak, nv);
            if (sum.size() == 0) sum = Eigen::MatrixXcd::Zero(v.rows(), v.cols());
            sum += v;
            ++nodes;
            return nv;
        };
        std::vector<double> rn{eval_at(center)}, ln;
        auto settled = [&](const std::vector<double>& vals) {
            if (vals.size() < 8) return false;
            for (std::size_t k = vals.size() - 3; k < vals.size(); ++k)
                if (vals[k] > 1e-17 * peak) return false;
            return true;
        };
        for (int guard = 0; guard < 4000; ++guard) {
            const bool rs = settled(rn), ls = settled(ln);
            if (rs && ls) break;
            if (!rs) rn.push_back(eval_at(center + h * (++right)));
            if (!ls) ln.push_back(eval_at(center - h * (++left)));
        }
        lo = center - h * left;
        hi = center + h * right;
        sum *= h;
    } else {
        const int intervals = std::max(2, static_cast<int>(std::ceil((hi - lo) / h)));
        h = (hi - lo) / intervals;
        std::vector<double> sig;
        for (int k = 0; k <= intervals; ++k) sig.push_back(lo + k * h);
        accumulate(sig);
        sum *= h;
    }

    double err = std::numeric_limits<double>::infinity();
    for (int level = 1; level <= opt.max_halvings; ++level) {
        const int intervals = static_cast<int>(std::llround((hi - lo) / h));
        const Eigen::MatrixXcd prev = sum;
        h *= 0.5;
        std::vector<double> sig;
        for (int j = 0; j < intervals; ++j) sig.push_back(lo + (2 * j + 1) * h);
        Eigen::MatrixXcd coarse = sum;
        sum.setZero();
        accumulate(sig);
        sum = 0.5 * coarse + h * sum;
        err = norm(sum - prev);
        if (err <= opt.tolerance * std::max(norm(sum), scale)) {
            if (info) *info = QuadratureInfo{err, nodes, h};
            return sum;
        }
    }
    if (info) *info = QuadratureInfo{err, nodes, h};
    throw QuadratureError("quadrature did not converge; estimated error " + std::to_string(err), err);
}

Eigen::MatrixXcd apply_psi(const BisectorialOperator& T, const PsiFunction& psi, const Eigen::MatrixXcd& U,
                           const QuadratureOptions& opt, QuadratureInfo* info) {
    const auto& op = *T.action;
    if (U.rows() != op.dim()) throw ValidationError("apply_psi: vector size mismatch");
    // Boundary of S_mu, counterclockwise around each sector: in along +mu, out along -mu
    // on the right; the left sector is the negation.
    struct Ray {
        double angle;
        double orientation;
    };
    const Ray rays[4] = {{-T.mu, 1.0}, {T.mu, -1.0}, {pi - T.mu, 1.0}, {pi + T.mu, -1.0}};
    auto F = [&](double sigma) {
        Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(U.rows(), U.cols());
        for (const auto& ray : rays) {
            const cdouble z = std::polar(std::exp(sigma), ray.angle);
            const cdouble w = ray.orientation * psi.eval(z) * z / (2.0 * pi * I1);
            if (w == 0.0) continue;
            acc += w * op.factor(z)->solve(U);
        }
        return acc;
    };
    // Truncate where the decay bound drops below 1e-16 of its peak: r^a/(1+r^2a) <= 1e-16/2.
    const double L = std::log(2e16) / psi.alpha;
    auto nrm = [&](const Eigen::MatrixXcd& X) { return hilbert_norm(op, X); };
    return trapezoid_line(F, nrm, -L, L, false, 0.0, hilbert_norm(op, U), opt, info);
}

Eigen::MatrixXcd apply_sgn(const BisectorialOperator& T, const Eigen::MatrixXcd& U, const QuadratureOptions& opt,
                           QuadratureInfo* info) {
    const auto& op = *T.action;
    if (U.rows() != op.dim()) throw ValidationError("apply_sgn: vector size mismatch");
    auto F = [&](double sigma) {
        const double y = std::exp(sigma);
        return Eigen::MatrixXcd((-y / pi) * op.resolvent_pair_imaginary(y, U));
    };
    const auto [lo, hi] = op.spectral_bounds();
    auto nrm = [&](const Eigen::MatrixXcd& X) { return hilbert_norm(op, X); };
    const double center = 0.5 * (std::log(lo) + std::log(hi));
    return trapezoid_line(F, nrm, 0.0, 0.0, true, center, hilbert_norm(op, U), opt, info);
}

Eigen::MatrixXcd apply_null_projection(const BisectorialOperator& T, const Eigen::MatrixXcd& U, int nodes) {
    const auto& op = *T.action;
    double r = 0.5 * op.spectral_bounds().first;
    if (T.eigenvalues.size()) {
        const double top = T.eigenvalues.cwiseAbs().maxCoeff();
        double low = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < T.eigenvalues.size(); ++i)
            if (std::abs(T.eigenvalues[i]) > 1e-9 * top) low = std::min(low, std::abs(T.eigenvalues[i]));
        if (std::isfinite(low)) r = 0.5 * low;
    }
    // (1/2 pi i) \oint R(z) dz with z = r e^{i phi}: the mean of z R(z) U over the circle.
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(U.rows(), U.cols());
    for (int k = 0; k < nodes; ++k) {
        const cdouble z = std::polar(r, 2.0 * pi * (k + 0.5) / nodes);
        acc += z * op.factor(z)->solve(U);
    }
    return acc / static_cast<double>(nodes);
}

SgnProjections sgn_projections(const BisectorialOperator& T, const Eigen::MatrixXcd& U, const QuadratureOptions& opt) {
    const Eigen::MatrixXcd S = apply_sgn(T, U, opt);
    Eigen::MatrixXcd P = apply_null_projection(T, U);
    SgnProjections out;
    out.chi_plus = 0.5 * (U - P + S);
    out.chi_minus = 0.5 * (U - P - S);
    out.null_projection = std::move(P);
    return out;
}

QuadraticEstimate quadratic_estimate(const BisectorialOperator& T, const PsiFunction& psi, const Eigen::VectorXcd& u,
                                     std::pair<double, double> t_range, const QuadratureOptions& opt) {
    const auto& op = *T.action;
    const auto [lo, hi] = op.spectral_bounds();
    if (!(t_range.first > 0.0) || !(t_range.second > t_range.first))
        throw ValidationError("quadratic_estimate: invalid t range");
    if (t_range.first * hi > 1e-6 || t_range.second * lo < 1e6)
        throw ValidationError("quadratic_estimate: t range does not resolve the spectral extremes");
    auto psi_t = [&](double t) {
        if (!psi.partial_fractions.empty()) {
            // psi(tT) = sum_j c_j (tT - p_j)^{-1} = -sum_j (c_j / t) R(p_j / t).
            Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(u.size());
            for (const auto& [p, c] : psi.partial_fractions) acc -= (c / t) * op.factor(p / t)->solve(u).col(0);
            return acc;
        }
        PsiFunction scaled = psi;
        scaled.eval = [&psi, t](cdouble z) { return psi.eval(t * z); };
        return Eigen::VectorXcd(apply_psi(T, scaled, u, opt).col(0));
    };
    auto F = [&](double tau) {
        const Eigen::VectorXcd v = psi_t(std::exp(tau));
        Eigen::MatrixXcd m(1, 1);
        m(0, 0) = op.norm(v) * op.norm(v);
        return m;
    };
    auto nrm = [](const Eigen::MatrixXcd& X) { return std::abs(X(0, 0)); };
    const double a = std::log(t_range.first), b = std::log(t_range.second);
    QuadratureInfo info;
    const double uu = op.norm(u) * op.norm(u);
    const double value = trapezoid_line(F, nrm, a, b, false, 0.0, uu, opt, &info)(0, 0).real();
    // Tails decay at least like exp(-2|tau|) beyond the range.
    const double tails = 0.5 * (F(a)(0, 0).real() + F(b)(0, 0).real());
    return QuadraticEstimate{value, info.error_estimate + tails};
}

// ---------------------------------------------------------------------------
// Square root

SqrtOperator::SqrtOperator(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                           std::optional<Eigen::VectorXcd> b, QuadratureOptions opt)
    : opt_(opt) {
    estimate_omega(B, b);
    dirac_ = std::make_shared<const DiracOperator>(std::move(assembly), B, std::move(b));
}

SqrtOperator::SqrtOperator(const EllipticOperator& L, QuadratureOptions opt)
    : SqrtOperator(L.assembly_ptr(), L.coefficients(), L.multiplier(), opt) {}

Eigen::MatrixXcd SqrtOperator::apply(const Eigen::MatrixXcd& U, QuadratureInfo* info) const {
    const auto& pi_b = *dirac_;
    const Eigen::Index n = pi_b.num_vertices();
    if (U.rows() != n) throw ValidationError("sqrt: vector size mismatch");
    // sqrt(L) u is the first block of sgn(Pi_B)(0, grad u).
    const BisectorialOperator T{dirac_, 0.0, 0.0, 0.0, {}};
    Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(pi_b.dim(), U.cols());
    X.topRows(n) = U;
    X = pi_b.gamma(X);
    return apply_sgn(T, X, opt_, info).topRows(n);
}

Eigen::MatrixXcd SqrtOperator::dense() const {
    return apply(Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(dim(), dim())), nullptr);
}

SqrtOperator sqrt_op(const EllipticOperator& L, QuadratureOptions opt) { return SqrtOperator(L, opt); }

} // namespace geoflow
