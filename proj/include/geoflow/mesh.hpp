#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace geoflow {

enum class Topology { sphere, torus, unknown };

const char* topology_name(Topology t);

/// Closed, consistently oriented triangulated surface. Construction validates the
/// manifold/orientation/Euler invariants and derives the adjacency.
class TriangleMesh {
public:
    TriangleMesh(std::vector<Eigen::Vector3d> vertices, std::vector<std::array<int, 3>> triangles,
                 Topology topology = Topology::unknown);

    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_triangles() const { return static_cast<int>(triangles_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const std::vector<Eigen::Vector3d>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const Eigen::Vector3d& vertex(int i) const { return vertices_[i]; }
    const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
    Topology topology() const { return topology_; }
    int euler_characteristic() const { return num_vertices() - num_edges() + num_triangles(); }

    /// Unique undirected edges with v0 < v1, sorted.
    const std::vector<std::array<int, 2>>& edges() const { return edges_; }
    const std::vector<int>& vertex_triangles(int v) const { return vertex_triangles_[v]; }
    /// Neighbours of v, sorted by index.
    const std::vector<int>& vertex_neighbors(int v) const { return vertex_neighbors_[v]; }
    /// Triangle containing the directed edge (a -> b), or -1.
    int triangle_with_edge(int a, int b) const;

    /// Embedding-frame data of triangle t: columns of `frame` are the orthonormal
    /// in-plane axes e1 (along p1 - p0) and e2; `corners` holds the 2D corner coordinates.
    struct LocalFrame {
        Eigen::Matrix<double, 3, 2> frame;
        Eigen::Matrix<double, 2, 3> corners;
        double area;
    };
    LocalFrame local_frame(int t) const;
    double reference_area(int t) const { return reference_areas_[t]; }

    /// Optional per-vertex reference neighbour used to anchor vertex tangent frames
    /// (-1 means "first neighbour in rotation order").
    const std::vector<int>& reference_neighbors() const { return reference_neighbor_; }
    void set_reference_neighbors(std::vector<int> refs);

    /// Vertices declared singular by the generator (e.g. a cone apex).
    const std::vector<int>& singular_vertices() const { return singular_; }
    void set_singular_vertices(std::vector<int> s) { singular_ = std::move(s); }

    /// Connectivity fingerprint used to check that metrics refer to the same mesh.
    std::uint64_t signature() const { return signature_; }

private:
    std::vector<Eigen::Vector3d> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    Topology topology_;
    std::vector<std::array<int, 2>> edges_;
    std::vector<std::vector<int>> vertex_triangles_;
    std::vector<std::vector<int>> vertex_neighbors_;
    std::vector<double> reference_areas_;
    std::vector<int> reference_neighbor_;
    std::vector<int> singular_;
    std::vector<std::pair<std::uint64_t, int>> directed_;  // sorted (a<<32|b, triangle)
    std::uint64_t signature_ = 0;
};

/// Geodesic icosphere of the unit sphere with vertex 0 at the north pole.
TriangleMesh build_icosphere(int subdivisions);

/// Regular tetrahedron inscribed in the unit sphere (4 vertices).
TriangleMesh build_tetrahedral_sphere();

/// Vertices whose closed 1-ring (and `margin - 1` further rings) avoids the singular set.
std::vector<int> nonsingular_set(const TriangleMesh& mesh, int margin = 1);

/// Vertices within `rings` edge hops of any vertex in `seeds`.
std::vector<int> ring_neighborhood(const TriangleMesh& mesh, const std::vector<int>& seeds, int rings);

} // namespace geoflow
