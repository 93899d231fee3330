#include "geoflow/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geoflow/errors.hpp"

namespace geoflow {

RoughMetric::RoughMetric(const TriangleMesh& mesh, std::vector<Eigen::Matrix2d> tensors)
    : tensors_(std::move(tensors)), signature_(mesh.signature()) {
    if (static_cast<int>(tensors_.size()) != mesh.num_triangles())
        throw ValidationError("metric: tensor count does not match triangle count");
    reference_areas_.resize(tensors_.size());
    for (int t = 0; t < mesh.num_triangles(); ++t) reference_areas_[t] = mesh.reference_area(t);
    finalize();
}

void RoughMetric::finalize() {
    kappa_lo_ = std::numeric_limits<double>::infinity();
    kappa_hi_ = 0.0;
    for (const auto& G : tensors_) {
        if (!G.allFinite()) throw ValidationError("metric: non-finite tensor");
        if (std::abs(G(0, 1) - G(1, 0)) > 1e-14 * G.norm()) throw ValidationError("metric: tensor not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(G);
        kappa_lo_ = std::min(kappa_lo_, es.eigenvalues()[0]);
        kappa_hi_ = std::max(kappa_hi_, es.eigenvalues()[1]);
    }
    if (!(kappa_lo_ > 0.0)) throw ValidationError("metric: tensor not positive definite");
}

RoughMetric RoughMetric::induced(const TriangleMesh& mesh) {
    return RoughMetric(mesh, std::vector<Eigen::Matrix2d>(mesh.num_triangles(), Eigen::Matrix2d::Identity()));
}

double RoughMetric::total_measure() const {
    double s = 0.0;
    for (int t = 0; t < num_triangles(); ++t) s += measure_weight(t);
    return s;
}

RoughMetric RoughMetric::scaled(double factor) const {
    if (!(factor > 0.0)) throw ValidationError("metric: scale factor must be positive");
    RoughMetric m(*this);
    for (auto& G : m.tensors_) G *= factor;
    m.finalize();
    return m;
}

Eigen::Matrix2d metric_factor(const Eigen::Matrix2d& G) {
    Eigen::LLT<Eigen::Matrix2d> llt(G);
    if (llt.info() != Eigen::Success) throw ValidationError("metric: tensor not positive definite");
    return llt.matrixU();
}

Eigen::Matrix2d MetricPair::divergence_coefficient(int t) const {
    return theta[t] * B_orthonormal[t].inverse();
}

MetricPair compare_metrics(const RoughMetric& a, const RoughMetric& b) {
    if (a.mesh_signature() != b.mesh_signature() || a.num_triangles() != b.num_triangles())
        throw ValidationError("compare_metrics: metrics live on different meshes");
    MetricPair p{a, b, {}, {}, {}, 1.0};
    const int nt = a.num_triangles();
    p.B_field.resize(nt);
    p.B_orthonormal.resize(nt);
    p.theta.resize(nt);
    double C = 1.0;
    for (int t = 0; t < nt; ++t) {
        const Eigen::Matrix2d& Ga = a.tensor(t);
        const Eigen::Matrix2d& Gb = b.tensor(t);
        p.B_field[t] = Ga.ldlt().solve(Gb);
        const Eigen::Matrix2d F = metric_factor(Ga);
        const Eigen::Matrix2d Finv = F.inverse();
        Eigen::Matrix2d H = Finv.transpose() * Gb * Finv;
        H = 0.5 * (H + H.transpose()).eval();
        p.B_orthonormal[t] = H;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(H);
        const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[1];
        p.theta[t] = std::sqrt(lo * hi);
        C = std::max({C, std::sqrt(hi), 1.0 / std::sqrt(lo)});
    }
    p.closeness = C;
    return p;
}

RoughMetric metric_from_edge_lengths(const TriangleMesh& mesh, const std::function<double(int, int)>& length) {
    std::vector<Eigen::Matrix2d> tensors(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const auto lf = mesh.local_frame(t);
        const Eigen::Vector2d e1 = lf.corners.col(1) - lf.corners.col(0);
        const Eigen::Vector2d e2 = lf.corners.col(2) - lf.corners.col(0);
        const Eigen::Vector2d e3 = lf.corners.col(2) - lf.corners.col(1);
        // Unknowns (g11, g12, g22): e^T G e = l^2 for the three edges.
        Eigen::Matrix3d A;
        Eigen::Vector3d rhs;
        const Eigen::Vector2d* es[3] = {&e1, &e2, &e3};
        const double ls[3] = {length(tri[0], tri[1]), length(tri[0], tri[2]), length(tri[1], tri[2])};
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector2d& e = *es[k];
            A.row(k) << e.x() * e.x(), 2.0 * e.x() * e.y(), e.y() * e.y();
            rhs[k] = ls[k] * ls[k];
        }
        const Eigen::Vector3d g = A.partialPivLu().solve(rhs);
        tensors[t] << g[0], g[1], g[1], g[2];
    }
    return RoughMetric(mesh, std::move(tensors));
}

namespace {

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

} // namespace

ConeSphere build_cone_sphere(double cone_angle, int subdivisions) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (!(cone_angle >= 1e-3)) throw ValidationError("cone_sphere: cone angle too close to 0");
    if (cone_angle > two_pi * (1.0 + 1e-14)) throw ValidationError("cone_sphere: cone angle exceeds 2*pi");
    TriangleMesh mesh = build_icosphere(subdivisions);
    const double c = std::min(cone_angle / two_pi, 1.0);
    const double r0 = std::numbers::pi / 4.0, r1 = std::numbers::pi / 2.0;
    std::vector<Eigen::Matrix2d> tensors(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Eigen::Vector3d centroid = (mesh.vertex(tri[0]) + mesh.vertex(tri[1]) + mesh.vertex(tri[2])) / 3.0;
        const double r = std::acos(std::clamp(centroid.normalized().z(), -1.0, 1.0));
        const double s = c + (1.0 - c) * smoothstep((r - r0) / (r1 - r0));
        const auto lf = mesh.local_frame(t);
        // Angular direction projected into the triangle plane; radial is its in-plane normal.
        const Eigen::Vector3d azimuth = Eigen::Vector3d::UnitZ().cross(centroid);
        Eigen::Vector2d u_theta(lf.frame.col(0).dot(azimuth), lf.frame.col(1).dot(azimuth));
        if (u_theta.norm() < 1e-14) {
            tensors[t].setIdentity();
            continue;
        }
        u_theta.normalize();
        const Eigen::Vector2d u_r(-u_theta.y(), u_theta.x());
        tensors[t] = u_r * u_r.transpose() + s * s * u_theta * u_theta.transpose();
    }
    mesh.set_singular_vertices({0});
    RoughMetric metric(mesh, std::move(tensors));
    return ConeSphere{std::move(mesh), std::move(metric), 0};
}

FlatTorus build_flat_torus(int n_u, int n_v, double side_u, double side_v) {
    if (n_u < 3 || n_v < 3 || n_u > 512 || n_v > 512) throw ValidationError("flat_torus: grid size must lie in [3, 512]");
    if (!(side_u > 0.0) || !(side_v > 0.0)) throw ValidationError("flat_torus: side lengths must be positive");
    const double R = 2.0, r = 1.0;
    std::vector<Eigen::Vector3d> v(static_cast<std::size_t>(n_u) * n_v);
    auto id = [&](int i, int j) { return ((i % n_u + n_u) % n_u) * n_v + ((j % n_v + n_v) % n_v); };
    for (int i = 0; i < n_u; ++i)
        for (int j = 0; j < n_v; ++j) {
            const double a = 2.0 * std::numbers::pi * i / n_u, b = 2.0 * std::numbers::pi * j / n_v;
            v[id(i, j)] = Eigen::Vector3d((R + r * std::cos(b)) * std::cos(a), (R + r * std::cos(b)) * std::sin(a),
                                          r * std::sin(b));
        }
    std::vector<std::array<int, 3>> f;
    f.reserve(2 * v.size());
    for (int i = 0; i < n_u; ++i)
        for (int j = 0; j < n_v; ++j) {
            f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    TriangleMesh mesh(std::move(v), std::move(f), Topology::torus);
    std::vector<int> refs(mesh.num_vertices());
    for (int i = 0; i < n_u; ++i)
        for (int j = 0; j < n_v; ++j) refs[id(i, j)] = id(i + 1, j);
    mesh.set_reference_neighbors(std::move(refs));

    const double hu = side_u / n_u, hv = side_v / n_v;
    auto length = [&](int a, int b) {
        int di = std::abs(a / n_v - b / n_v), dj = std::abs(a % n_v - b % n_v);
        di = std::min(di, n_u - di);
        dj = std::min(dj, n_v - dj);
        return std::hypot(di * hu, dj * hv);
    };
    RoughMetric metric = metric_from_edge_lengths(mesh, length);
    return FlatTorus{std::move(mesh), std::move(metric), side_u, side_v};
}

} // namespace geoflow
