#pragma once

#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"
#include "geoflow/mesh.hpp"

namespace geoflow {

/// Per-vertex orthonormal tangent frames built from the intrinsic 1-ring layout:
/// corner angles are rescaled to sum to 2*pi and laid out counterclockwise starting
/// at the vertex's reference neighbour (which sits on the first frame axis).
class VertexFrames {
public:
    VertexFrames(const TriangleMesh& mesh, const Assembly& assembly);

    int num_vertices() const { return static_cast<int>(corners_.size()); }

    /// Recovered differential of f at x in the frame of x (area-weighted average of
    /// the incident per-triangle differentials).
    Eigen::Vector2d recovered_gradient(int x, const Eigen::VectorXd& f) const;
    /// Weights c_j with recovered_gradient(x, f) . v = sum_j c_j f_j.
    std::vector<std::pair<int, double>> derivative_weights(int x, const Eigen::Vector2d& v) const;

    /// Layout angle of the edge x -> y in the frame of x.
    double edge_angle(int x, int y) const;
    /// Rotation taking frame-of-y coordinates to frame-of-x coordinates along the edge.
    Eigen::Matrix2d transport(int x, int y) const;
    /// Ratio 2*pi / (sum of corner angles) at x.
    double angle_scale(int x) const { return scale_[x]; }

    /// Map from the triangle's intrinsic coordinates to the frame of its corner vertex.
    Eigen::Matrix2d corner_map(int t, int corner) const;

    /// Squared L^2 norm of the discrete covariant Hessian of f (recovered gradients
    /// carried into each triangle and differentiated there).
    double hessian_norm_squared(const Eigen::VectorXd& f) const;

private:
    struct Corner {
        int triangle;
        int local;     ///< index of x inside the triangle
        int a, b;      ///< next vertices in counterclockwise order
        double angle_a, angle_b;
        Eigen::Matrix2d map;   ///< triangle coordinates -> vertex frame
        Eigen::Matrix2d edges_inv_t;  ///< [Phi_a Phi_b]^{-T}
        double weight;
    };
    std::vector<std::vector<Corner>> corners_;
    std::vector<double> scale_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<std::array<int, 3>> corner_index_;  ///< per triangle: position in corners_[v]
    std::vector<TriangleGeometry> geometry_;
};

} // namespace geoflow
