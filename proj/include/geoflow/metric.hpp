#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/mesh.hpp"

namespace geoflow {

/// Per-triangle constant metric tensor, expressed in the triangle's local
/// orthonormal frame of the embedding (TriangleMesh::local_frame).
class RoughMetric {
public:
    RoughMetric(const TriangleMesh& mesh, std::vector<Eigen::Matrix2d> tensors);

    /// Metric induced by the embedding (identity in every local frame).
    static RoughMetric induced(const TriangleMesh& mesh);

    int num_triangles() const { return static_cast<int>(tensors_.size()); }
    const Eigen::Matrix2d& tensor(int t) const { return tensors_[t]; }
    const std::vector<Eigen::Matrix2d>& tensors() const { return tensors_; }
    double kappa_lo() const { return kappa_lo_; }
    double kappa_hi() const { return kappa_hi_; }
    /// sqrt(det g) times the reference area of the triangle.
    double measure_weight(int t) const { return std::sqrt(tensors_[t].determinant()) * reference_areas_[t]; }
    double total_measure() const;
    std::uint64_t mesh_signature() const { return signature_; }

    RoughMetric scaled(double factor) const;

private:
    RoughMetric() = default;
    void finalize();

    std::vector<Eigen::Matrix2d> tensors_;
    std::vector<double> reference_areas_;
    double kappa_lo_ = 0.0;
    double kappa_hi_ = 0.0;
    std::uint64_t signature_ = 0;
};

/// Comparison data between a background metric a and a second metric b.
struct MetricPair {
    RoughMetric metric_a;
    RoughMetric metric_b;
    /// B with a(Bu, v) = b(u, v), in the local embedding frame.
    std::vector<Eigen::Matrix2d> B_field;
    /// The same tensor written in an a-orthonormal frame (symmetric there).
    std::vector<Eigen::Matrix2d> B_orthonormal;
    std::vector<double> theta;
    double closeness = 1.0;

    /// Coefficient in a-orthonormal covector coordinates for which
    /// -div_a(coefficient grad u) = theta * Laplacian_b u.
    Eigen::Matrix2d divergence_coefficient(int t) const;
};

MetricPair compare_metrics(const RoughMetric& a, const RoughMetric& b);

/// Upper-triangular F with G = F^T F; maps local-frame vectors to G-orthonormal coordinates.
Eigen::Matrix2d metric_factor(const Eigen::Matrix2d& G);

/// Metric whose edge lengths match `length(v0, v1)` on every triangle.
RoughMetric metric_from_edge_lengths(const TriangleMesh& mesh, const std::function<double(int, int)>& length);

struct ConeSphere {
    TriangleMesh mesh;
    RoughMetric metric;
    int apex;
};

/// Icosphere with a conical metric of total angle `cone_angle` at the north pole,
/// blended smoothly into the round metric between polar angles pi/4 and pi/2.
ConeSphere build_cone_sphere(double cone_angle, int subdivisions);

struct FlatTorus {
    TriangleMesh mesh;
    RoughMetric metric;
    double side_u;
    double side_v;
};

/// Regular n_u x n_v grid on a torus of revolution, carrying the flat metric of the
/// rectangle [0, side_u) x [0, side_v) with periodic identifications.
FlatTorus build_flat_torus(int n_u, int n_v, double side_u, double side_v);

} // namespace geoflow
