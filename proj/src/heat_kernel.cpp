#include "geoflow/heat_kernel.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "geoflow/errors.hpp"

namespace geoflow {

HeatKernel::HeatKernel(const SparseMatrix& stiffness, const SparseMatrix& mass,
                       std::shared_ptr<const VertexFrames> frames, int modes)
    : frames_(std::move(frames)) {
    const int n = static_cast<int>(stiffness.rows());
    if (frames_->num_vertices() != n) throw ValidationError("heat kernel: frames do not match the mesh");
    const int count = modes < 0 ? n : modes;
    if (count < 2 || count > n) throw ValidationError("heat kernel: mode count must lie in [2, n]");
    spec_ = eigensolve_pencil(stiffness, mass, count);
    measure_ = mass * Eigen::VectorXd::Ones(n);

    // Diagonal of M^{-1} minus the retained part: the exact tail on the diagonal.
    Eigen::VectorXd minv_diag(n);
    const bool diagonal_mass = mass.nonZeros() == n;
    if (diagonal_mass) {
        minv_diag = mass.diagonal().cwiseInverse();
    } else {
        Eigen::SimplicialLDLT<SparseMatrix> solver(mass);
        for (int i = 0; i < n; ++i) minv_diag[i] = solver.solve(Eigen::VectorXd::Unit(n, i))[i];
    }
    tail_diag_ = (minv_diag - spec_.vectors.rowwise().squaredNorm()).cwiseMax(0.0);
    if (count == n || tail_diag_.maxCoeff() <= 1e-10 * minv_diag.maxCoeff()) tail_diag_.setZero();

    m_matrix_ = diagonal_mass;
    for (int k = 0; k < stiffness.outerSize() && m_matrix_; ++k)
        for (SparseMatrix::InnerIterator it(stiffness, k); it; ++it)
            if (it.row() != it.col() && it.value() > 1e-14 * std::abs(stiffness.coeff(it.row(), it.row()))) {
                m_matrix_ = false;
                break;
            }

    // Below 1/lambda_max the discrete kernel only resolves the mass matrix; start there
    // and advance until the tail certificate holds.
    const double lam_top = spec_.values[count - 1];
    t_min_ = 1.0 / lam_top;
    if (tail_diag_.maxCoeff() > 0.0) {
        auto certified = [&](double t) { return tail_bound(t) <= 1e-8 * min_diagonal(t); };
        double hi = t_min_;
        while (!certified(hi)) {
            hi *= 2.0;
            if (hi > 1e6) throw TruncationError("heat kernel: tail certificate never holds", hi);
        }
        double lo = hi / 2.0 < t_min_ ? t_min_ : hi / 2.0;
        if (certified(lo)) hi = lo;
        for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (certified(mid) ? hi : lo) = mid;
        }
        t_min_ = hi;
    }
}

double HeatKernel::tail_bound(double t) const {
    if (tail_diag_.size() == 0 || tail_diag_.maxCoeff() == 0.0) return 0.0;
    // Omitted eigenvalues are at least the largest retained one.
    return std::exp(-spec_.values[K() - 1] * t) * tail_diag_.maxCoeff();
}

double HeatKernel::max_diagonal(double t) const {
    const Eigen::VectorXd w = (-spec_.values.array() * t).exp();
    return (spec_.vectors.array().square().matrix() * w).maxCoeff();
}

double HeatKernel::min_diagonal(double t) const {
    const Eigen::VectorXd w = (-spec_.values.array() * t).exp();
    return (spec_.vectors.array().square().matrix() * w).minCoeff();
}

double HeatKernel::resolution(double t) const {
    const double eps = std::numeric_limits<double>::epsilon();
    const double n = static_cast<double>(num_vertices());
    const double stiff = std::max(1.0, t * spec_.values[K() - 1]);
    return 16.0 * eps * std::sqrt(n) * stiff * max_diagonal(t);
}

std::shared_ptr<const HeatKernel> build_heat_kernel(const TriangleMesh& mesh, const RoughMetric& kernel_metric,
                                                    const RoughMetric& frame_metric, int modes, MassKind mass) {
    auto kernel_asm = assemble(mesh, kernel_metric, mass);
    auto frame_asm = &kernel_metric == &frame_metric ? kernel_asm : assemble(mesh, frame_metric, mass);
    auto frames = std::make_shared<const VertexFrames>(mesh, *frame_asm);
    const auto A = CoefficientField::identity(mesh.num_triangles());
    const SparseMatrix K = stiffness_matrix(*kernel_asm, A).real();
    return std::make_shared<const HeatKernel>(K, kernel_asm->spaces.mass, std::move(frames), modes);
}

namespace {

void check_time(const HeatKernel& hk, int x, double t) {
    if (x < 0 || x >= hk.num_vertices()) throw ValidationError("heat kernel: vertex out of range");
    if (!(t >= hk.t_min()))
        throw TruncationError("heat kernel: t = " + std::to_string(t) + " below certified t_min = " +
                                  std::to_string(hk.t_min()),
                              hk.t_min());
}

} // namespace

KernelSlice kernel_slice(const HeatKernel& hk, int x, double t) {
    check_time(hk, x, t);
    const auto& s = hk.spec();
    const Eigen::VectorXd c = (-s.values.array() * t).exp() * s.vectors.row(x).transpose().array();
    return KernelSlice{x, t, s.vectors * c, hk.resolution(t)};
}

Eigen::VectorXd kernel_x_derivative(const HeatKernel& hk, int x, const Eigen::Vector2d& v, double t) {
    check_time(hk, x, t);
    const auto& s = hk.spec();
    if (v.squaredNorm() == 0.0) return Eigen::VectorXd::Zero(hk.num_vertices());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(s.count());
    for (const auto& [j, w] : hk.frames().derivative_weights(x, v)) g += w * s.vectors.row(j).transpose();
    const Eigen::VectorXd c = (-s.values.array() * t).exp() * g.array();
    return s.vectors * c;
}

} // namespace geoflow
