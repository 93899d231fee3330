#include "geoflow/fem.hpp"

#include <cmath>
#include <string>

#include "geoflow/errors.hpp"
#include "geoflow/random.hpp"

namespace geoflow {

std::vector<TriangleGeometry> triangle_geometry(const TriangleMesh& mesh, const RoughMetric& metric) {
    if (metric.mesh_signature() != mesh.signature()) throw ValidationError("assemble: metric belongs to another mesh");
    std::vector<TriangleGeometry> geo(mesh.num_triangles());
    double total = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto lf = mesh.local_frame(t);
        const Eigen::Matrix2d F = metric_factor(metric.tensor(t));
        TriangleGeometry& g = geo[t];
        g.corners = F * lf.corners;
        const Eigen::Vector2d e1 = g.corners.col(1) - g.corners.col(0);
        const Eigen::Vector2d e2 = g.corners.col(2) - g.corners.col(0);
        g.area = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector2d e = g.corners.col((i + 2) % 3) - g.corners.col((i + 1) % 3);
            g.grad.col(i) = Eigen::Vector2d(-e.y(), e.x()) / (2.0 * g.area);
        }
        total += g.area;
    }
    const double mean = total / mesh.num_triangles();
    for (int t = 0; t < mesh.num_triangles(); ++t)
        if (!(geo[t].area > 1e-14 * mean))
            throw ValidationError("assemble: degenerate triangle " + std::to_string(t) + " under the metric");
    return geo;
}

SparseMatrix weighted_mass(const std::vector<std::array<int, 3>>& triangles, const std::vector<double>& weights,
                           int num_vertices, MassKind kind) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(9 * triangles.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        const auto& tri = triangles[t];
        for (int i = 0; i < 3; ++i) {
            if (kind == MassKind::lumped) {
                trip.emplace_back(tri[i], tri[i], weights[t] / 3.0);
                continue;
            }
            for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], weights[t] * (i == j ? 2.0 : 1.0) / 12.0);
        }
    }
    SparseMatrix M(num_vertices, num_vertices);
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

GradDivPair::GradDivPair(SparseMatrix gradient, const DiscreteSpaces& spaces)
    : gradient_(std::move(gradient)), weights_(spaces.covector_weights),
      lumped_kind_(spaces.mass_kind == MassKind::lumped) {
    if (lumped_kind_) {
        lumped_ = spaces.mass.diagonal();
    } else {
        auto solver = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(spaces.mass);
        if (solver->info() != Eigen::Success) throw ValidationError("assemble: mass matrix not positive definite");
        mass_solver_ = std::move(solver);
    }
}

Eigen::VectorXd GradDivPair::solve_mass(const Eigen::VectorXd& x) const {
    if (lumped_kind_) return x.cwiseQuotient(lumped_);
    return mass_solver_->solve(x);
}

Eigen::VectorXcd GradDivPair::solve_mass(const Eigen::VectorXcd& x) const {
    if (lumped_kind_) return x.cwiseQuotient(lumped_.cast<std::complex<double>>());
    Eigen::VectorXcd r(x.size());
    r.real() = mass_solver_->solve(Eigen::VectorXd(x.real()));
    r.imag() = mass_solver_->solve(Eigen::VectorXd(x.imag()));
    return r;
}

Eigen::VectorXd GradDivPair::divergence(const Eigen::VectorXd& w) const {
    return -solve_mass(Eigen::VectorXd(gradient_.transpose() * weights_.cwiseProduct(w)));
}

Eigen::VectorXcd GradDivPair::divergence(const Eigen::VectorXcd& w) const {
    Eigen::VectorXcd load = gradient_.transpose().cast<std::complex<double>>() *
                            (weights_.cast<std::complex<double>>().cwiseProduct(w));
    return -solve_mass(load);
}

std::shared_ptr<const Assembly> assemble(const TriangleMesh& mesh, const RoughMetric& metric, MassKind mass) {
    auto geometry = triangle_geometry(mesh, metric);
    const int n = mesh.num_vertices(), nt = mesh.num_triangles();
    DiscreteSpaces spaces;
    spaces.mass_kind = mass;
    std::vector<double> areas(nt);
    spaces.covector_weights.resize(2 * nt);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(6 * nt);
    for (int t = 0; t < nt; ++t) {
        areas[t] = geometry[t].area;
        spaces.covector_weights[2 * t] = spaces.covector_weights[2 * t + 1] = areas[t];
        const auto& tri = mesh.triangle(t);
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 2; ++c) trip.emplace_back(2 * t + c, tri[i], geometry[t].grad(c, i));
    }
    SparseMatrix D(2 * nt, n);
    D.setFromTriplets(trip.begin(), trip.end());
    spaces.mass = weighted_mass(mesh.triangles(), areas, n, mass);
    spaces.measure = spaces.mass * Eigen::VectorXd::Ones(n);
    spaces.total_measure = spaces.measure.sum();
    GradDivPair pair(std::move(D), spaces);
    return std::make_shared<const Assembly>(
        Assembly{std::move(geometry), std::move(spaces), std::move(pair), mesh.triangles()});
}

// ---------------------------------------------------------------------------
// Coefficient fields

namespace {

double hermitian_floor(const Eigen::Matrix2cd& B) {
    const Eigen::Matrix2cd H = 0.5 * (B + B.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(H);
    return es.eigenvalues()[0];
}

double operator_norm(const Eigen::Matrix2cd& B) {
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(B);
    return svd.singularValues()[0];
}

} // namespace

double measured_kappa(const CoefficientField& A) {
    double k = std::numeric_limits<double>::infinity();
    for (const auto& B : A.tensors) k = std::min(k, hermitian_floor(B));
    return k;
}

double measured_Lambda(const CoefficientField& A) {
    double L = 0.0;
    for (const auto& B : A.tensors) L = std::max(L, operator_norm(B));
    return L;
}

void CoefficientField::validate() const {
    if (tensors.empty()) throw ValidationError("coefficients: empty field");
    if (!(kappa > 0.0)) throw EllipticityError("coefficients: kappa must be positive");
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const auto& B = tensors[t];
        if (!B.allFinite()) throw ValidationError("coefficients: non-finite tensor");
        if (real_symmetric) {
            if (B.imag().norm() != 0.0 || std::abs(B(0, 1) - B(1, 0)) > 1e-14 * B.norm())
                throw ValidationError("coefficients: tensor " + std::to_string(t) + " is not real symmetric");
        }
        if (hermitian_floor(B) < kappa * (1.0 - 1e-12))
            throw EllipticityError("coefficients: ellipticity fails on triangle " + std::to_string(t));
        if (operator_norm(B) > Lambda * (1.0 + 1e-12))
            throw EllipticityError("coefficients: norm bound fails on triangle " + std::to_string(t));
    }
}

CoefficientField CoefficientField::identity(int num_triangles, double scale) {
    CoefficientField A;
    A.tensors.assign(num_triangles, Eigen::Matrix2cd::Identity() * scale);
    A.kappa = A.Lambda = scale;
    return A;
}

CoefficientField CoefficientField::from_real(const std::vector<Eigen::Matrix2d>& tensors, std::optional<double> kappa,
                                             std::optional<double> Lambda) {
    CoefficientField A;
    A.tensors.reserve(tensors.size());
    for (const auto& T : tensors) A.tensors.push_back(T.cast<std::complex<double>>());
    A.real_symmetric = true;
    A.kappa = kappa.value_or(measured_kappa(A));
    A.Lambda = Lambda.value_or(measured_Lambda(A));
    A.validate();
    return A;
}

CoefficientField CoefficientField::from_complex(const std::vector<Eigen::Matrix2cd>& tensors,
                                                std::optional<double> kappa, std::optional<double> Lambda) {
    CoefficientField A;
    A.tensors = tensors;
    A.real_symmetric = false;
    A.kappa = kappa.value_or(measured_kappa(A));
    A.Lambda = Lambda.value_or(measured_Lambda(A));
    A.validate();
    return A;
}

// ---------------------------------------------------------------------------
// Stiffness

SparseMatrixC stiffness_matrix(const Assembly& assembly, const CoefficientField& A) {
    const int nt = static_cast<int>(assembly.geometry.size());
    if (A.num_triangles() != nt) throw ValidationError("stiffness: coefficient size mismatch");
    std::vector<Eigen::Triplet<std::complex<double>>> trip;
    trip.reserve(9 * nt);
    for (int t = 0; t < nt; ++t) {
        const auto& g = assembly.geometry[t];
        const Eigen::Matrix3cd local =
            g.area * (g.grad.transpose().cast<std::complex<double>>() * A.tensors[t] * g.grad.cast<std::complex<double>>());
        const auto& tri = assembly.triangles[t];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], local(i, j));
    }
    const int n = assembly.spaces.num_vertices();
    SparseMatrixC K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

SparseMatrix stiffness_matrix_real(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A,
                                   const Eigen::VectorXd& triangle_scale) {
    const int nt = static_cast<int>(assembly.geometry.size());
    if (static_cast<int>(A.size()) != nt || triangle_scale.size() != nt)
        throw ValidationError("stiffness: coefficient size mismatch");
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(9 * nt);
    for (int t = 0; t < nt; ++t) {
        const auto& g = assembly.geometry[t];
        const Eigen::Matrix3d local = (g.area * triangle_scale[t]) * (g.grad.transpose() * A[t] * g.grad);
        const auto& tri = assembly.triangles[t];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], local(i, j));
    }
    const int n = assembly.spaces.num_vertices();
    SparseMatrix K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

SparseMatrix stiffness_matrix_real(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A) {
    return stiffness_matrix_real(assembly, A, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(A.size())));
}

// ---------------------------------------------------------------------------
// Elliptic operator

EllipticOperator::EllipticOperator(std::shared_ptr<const Assembly> assembly, CoefficientField A,
                                   std::optional<Eigen::VectorXcd> b)
    : assembly_(std::move(assembly)), A_(std::move(A)), b_(std::move(b)) {
    if (A_.num_triangles() != assembly_->spaces.num_triangles())
        throw ValidationError("operator: coefficient field does not match the mesh");
    if (b_ && b_->size() != assembly_->spaces.num_vertices()) throw ValidationError("operator: multiplier size mismatch");
    Kc_ = stiffness_matrix(*assembly_, A_);
    if (A_.real_symmetric) {
        std::vector<Eigen::Matrix2d> real(A_.tensors.size());
        for (std::size_t t = 0; t < real.size(); ++t) real[t] = A_.tensors[t].real();
        K_ = stiffness_matrix_real(*assembly_, real);
    }
}

const SparseMatrix& EllipticOperator::stiffness() const {
    if (!A_.real_symmetric) throw ValidationError("operator: real stiffness requested for a complex field");
    return K_;
}

Eigen::VectorXd EllipticOperator::apply(const Eigen::VectorXd& u) const {
    if (!is_real()) throw ValidationError("operator: real apply on a complex operator");
    return pair().solve_mass(Eigen::VectorXd(K_ * u));
}

Eigen::VectorXcd EllipticOperator::apply(const Eigen::VectorXcd& u) const {
    Eigen::VectorXcd r = pair().solve_mass(Eigen::VectorXcd(Kc_ * u));
    if (b_) r = r.cwiseProduct(*b_);
    return r;
}

std::complex<double> EllipticOperator::form(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) const {
    return v.dot(Kc_ * u);
}

Eigen::MatrixXcd EllipticOperator::dense() const {
    const int n = dimension();
    Eigen::MatrixXcd L(n, n);
    const Eigen::MatrixXcd K = Eigen::MatrixXcd(Kc_);
    for (int j = 0; j < n; ++j) L.col(j) = pair().solve_mass(Eigen::VectorXcd(K.col(j)));
    if (b_) L = b_->asDiagonal() * L;
    return L;
}

EllipticOperator make_operator(std::shared_ptr<const Assembly> assembly, const CoefficientField& A,
                               std::optional<Eigen::VectorXcd> b) {
    A.validate();
    if (b) {
        for (Eigen::Index i = 0; i < b->size(); ++i)
            if (!((*b)[i].real() > 0.0) || !std::isfinite(std::abs((*b)[i])))
                throw EllipticityError("operator: multiplier b must have positive real part");
    }
    EllipticOperator op(std::move(assembly), A, std::move(b));
    if (A.real_symmetric) {
        // Garding bound <L u, u> >= kappa ||grad u||^2 on seeded probes.
        CounterRng rng(0x6761726469ULL);
        const auto& K = op.stiffness();
        for (int p = 0; p < 8; ++p) {
            const Eigen::VectorXd u = rng.normal_vector(op.dimension());
            const Eigen::VectorXd du = op.pair().grad(u);
            const double lhs = u.dot(K * u);
            const double rhs = A.kappa * op.spaces().covector_inner(du, du);
            if (lhs < rhs * (1.0 - 1e-10)) throw EllipticityError("operator: Garding bound fails on a probe");
        }
    }
    return op;
}

} // namespace geoflow
