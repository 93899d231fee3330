#include "geoflow/vertex_frames.hpp"

#include <cmath>
#include <numbers>

#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

double angle_between(const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    return std::atan2(u.x() * v.y() - u.y() * v.x(), u.dot(v));
}

Eigen::Matrix2d rotation(double a) {
    Eigen::Matrix2d R;
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return R;
}

} // namespace

VertexFrames::VertexFrames(const TriangleMesh& mesh, const Assembly& assembly)
    : triangles_(mesh.triangles()), geometry_(assembly.geometry) {
    const int n = mesh.num_vertices();
    corners_.assign(n, {});
    scale_.assign(n, 1.0);
    corner_index_.assign(mesh.num_triangles(), {-1, -1, -1});
    for (int x = 0; x < n; ++x) {
        int ref = mesh.reference_neighbors()[x];
        if (ref < 0) ref = mesh.vertex_neighbors(x).front();
        // Walk the fan counterclockwise starting at the triangle holding x -> ref.
        std::vector<Corner> fan;
        int t = mesh.triangle_with_edge(x, ref);
        const int deg = static_cast<int>(mesh.vertex_triangles(x).size());
        double total = 0.0;
        for (int step = 0; step < deg; ++step) {
            if (t < 0) throw ValidationError("vertex frames: broken fan");
            const auto& tri = mesh.triangle(t);
            int k = 0;
            while (tri[k] != x) ++k;
            Corner c{};
            c.triangle = t;
            c.local = k;
            c.a = tri[(k + 1) % 3];
            c.b = tri[(k + 2) % 3];
            const auto& g = geometry_[t];
            const Eigen::Vector2d ea = g.corners.col((k + 1) % 3) - g.corners.col(k);
            const Eigen::Vector2d eb = g.corners.col((k + 2) % 3) - g.corners.col(k);
            c.angle_a = total;
            total += angle_between(ea, eb);
            fan.push_back(c);
            t = mesh.triangle_with_edge(x, c.b);
        }
        if (fan.front().a != ref || mesh.triangle_with_edge(x, ref) != t)
            throw ValidationError("vertex frames: fan does not close");
        const double s = 2.0 * std::numbers::pi / total;
        scale_[x] = s;
        for (auto& c : fan) {
            const auto& g = geometry_[c.triangle];
            const int k = c.local;
            const Eigen::Vector2d ea = g.corners.col((k + 1) % 3) - g.corners.col(k);
            const Eigen::Vector2d eb = g.corners.col((k + 2) % 3) - g.corners.col(k);
            const double theta = angle_between(ea, eb);
            c.angle_a *= s;
            c.angle_b = c.angle_a + s * theta;
            Eigen::Matrix2d Phi;
            Phi.col(0) = ea.norm() * Eigen::Vector2d(std::cos(c.angle_a), std::sin(c.angle_a));
            Phi.col(1) = eb.norm() * Eigen::Vector2d(std::cos(c.angle_b), std::sin(c.angle_b));
            Eigen::Matrix2d E;
            E.col(0) = ea;
            E.col(1) = eb;
            c.map = Phi * E.inverse();
            c.edges_inv_t = Phi.inverse().transpose();
            c.weight = g.area;
        }
        double wsum = 0.0;
        for (const auto& c : fan) wsum += c.weight;
        for (std::size_t i = 0; i < fan.size(); ++i) {
            fan[i].weight /= wsum;
            corner_index_[fan[i].triangle][fan[i].local] = static_cast<int>(i);
        }
        corners_[x] = std::move(fan);
    }
}

Eigen::Vector2d VertexFrames::recovered_gradient(int x, const Eigen::VectorXd& f) const {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (const auto& c : corners_[x]) {
        const Eigen::Vector2d delta(f[c.a] - f[x], f[c.b] - f[x]);
        g += c.weight * (c.edges_inv_t * delta);
    }
    return g;
}

std::vector<std::pair<int, double>> VertexFrames::derivative_weights(int x, const Eigen::Vector2d& v) const {
    std::vector<std::pair<int, double>> w;
    double self = 0.0;
    for (const auto& c : corners_[x]) {
        // beta . v = delta . (Phi^{-1} v)
        const Eigen::Vector2d q = c.weight * (c.edges_inv_t.transpose() * v);
        w.emplace_back(c.a, q[0]);
        w.emplace_back(c.b, q[1]);
        self -= q[0] + q[1];
    }
    w.emplace_back(x, self);
    return w;
}

double VertexFrames::edge_angle(int x, int y) const {
    for (const auto& c : corners_[x])
        if (c.a == y) return c.angle_a;
    throw ValidationError("vertex frames: vertices are not adjacent");
}

Eigen::Matrix2d VertexFrames::transport(int x, int y) const {
    return rotation(edge_angle(x, y) + std::numbers::pi - edge_angle(y, x));
}

Eigen::Matrix2d VertexFrames::corner_map(int t, int corner) const {
    const int v = triangles_[t][corner];
    return corners_[v][corner_index_[t][corner]].map;
}

double VertexFrames::hessian_norm_squared(const Eigen::VectorXd& f) const {
    const int n = num_vertices();
    std::vector<Eigen::Vector2d> grads(n);
    for (int x = 0; x < n; ++x) grads[x] = recovered_gradient(x, f);
    double total = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const auto& g = geometry_[t];
        Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
        for (int i = 0; i < 3; ++i) {
            // Covector at the corner, pulled back into triangle coordinates.
            const Eigen::Vector2d beta = corner_map(static_cast<int>(t), i).transpose() * grads[triangles_[t][i]];
            H += beta * g.grad.col(i).transpose();
        }
        H = 0.5 * (H + H.transpose()).eval();
        total += g.area * H.squaredNorm();
    }
    return total;
}

} // namespace geoflow
