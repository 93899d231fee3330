#include "geoflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "geoflow/errors.hpp"

namespace geoflow {

const char* topology_name(Topology t) {
    switch (t) {
    case Topology::sphere: return "sphere";
    case Topology::torus: return "torus";
    default: return "unknown";
    }
}

namespace {

std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

} // namespace

TriangleMesh::TriangleMesh(std::vector<Eigen::Vector3d> vertices, std::vector<std::array<int, 3>> triangles,
                           Topology topology)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), topology_(topology) {
    const int n = num_vertices();
    if (n < 4 || triangles_.empty()) throw ValidationError("mesh: too few vertices or triangles");
    for (const auto& p : vertices_)
        if (!p.allFinite()) throw ValidationError("mesh: non-finite vertex position");

    directed_.reserve(3 * triangles_.size());
    for (int t = 0; t < num_triangles(); ++t) {
        const auto& tri = triangles_[t];
        for (int k = 0; k < 3; ++k) {
            if (tri[k] < 0 || tri[k] >= n) throw ValidationError("mesh: triangle index out of range");
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
            throw ValidationError("mesh: repeated vertex in triangle " + std::to_string(t));
        for (int k = 0; k < 3; ++k) directed_.emplace_back(edge_key(tri[k], tri[(k + 1) % 3]), t);
    }
    std::sort(directed_.begin(), directed_.end());
    for (std::size_t i = 1; i < directed_.size(); ++i)
        if (directed_[i].first == directed_[i - 1].first)
            throw ValidationError("mesh: directed edge used twice (inconsistent orientation or non-manifold)");

    for (const auto& [key, t] : directed_) {
        const int a = static_cast<int>(key >> 32);
        const int b = static_cast<int>(key & 0xffffffffu);
        if (triangle_with_edge(b, a) < 0) throw ValidationError("mesh: open boundary edge");
        if (a < b) edges_.push_back({a, b});
    }

    vertex_triangles_.assign(n, {});
    vertex_neighbors_.assign(n, {});
    for (int t = 0; t < num_triangles(); ++t)
        for (int v : triangles_[t]) vertex_triangles_[v].push_back(t);
    for (const auto& e : edges_) {
        vertex_neighbors_[e[0]].push_back(e[1]);
        vertex_neighbors_[e[1]].push_back(e[0]);
    }
    for (int v = 0; v < n; ++v) {
        if (vertex_triangles_[v].empty()) throw ValidationError("mesh: isolated vertex " + std::to_string(v));
        std::sort(vertex_neighbors_[v].begin(), vertex_neighbors_[v].end());
        // A manifold vertex has a single fan: triangles == neighbours.
        if (vertex_neighbors_[v].size() != vertex_triangles_[v].size())
            throw ValidationError("mesh: non-manifold vertex " + std::to_string(v));
    }

    // Connectedness (the kernel of the gradient must be the constants).
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : vertex_neighbors_[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                stack.push_back(w);
            }
    }
    if (reached != n) throw ValidationError("mesh: not connected");

    const int chi = euler_characteristic();
    if (topology_ == Topology::unknown) {
        topology_ = chi == 2 ? Topology::sphere : chi == 0 ? Topology::torus : Topology::unknown;
    } else {
        const int expected = topology_ == Topology::sphere ? 2 : 0;
        if (chi != expected)
            throw ValidationError("mesh: Euler characteristic " + std::to_string(chi) + " does not match declared " +
                                  topology_name(topology_));
    }

    reference_areas_.resize(triangles_.size());
    double total = 0.0;
    for (int t = 0; t < num_triangles(); ++t) {
        const auto& tri = triangles_[t];
        reference_areas_[t] =
            0.5 * (vertices_[tri[1]] - vertices_[tri[0]]).cross(vertices_[tri[2]] - vertices_[tri[0]]).norm();
        total += reference_areas_[t];
    }
    const double mean = total / num_triangles();
    for (int t = 0; t < num_triangles(); ++t)
        if (!(reference_areas_[t] > 1e-14 * mean))
            throw ValidationError("mesh: degenerate triangle " + std::to_string(t));

    reference_neighbor_.assign(n, -1);
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& tri : triangles_)
        for (int v : tri) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
    signature_ = h ^ static_cast<std::uint64_t>(n);
}

int TriangleMesh::triangle_with_edge(int a, int b) const {
    const auto key = edge_key(a, b);
    auto it = std::lower_bound(directed_.begin(), directed_.end(), std::make_pair(key, -1));
    if (it != directed_.end() && it->first == key) return it->second;
    return -1;
}

TriangleMesh::LocalFrame TriangleMesh::local_frame(int t) const {
    const auto& tri = triangles_[t];
    const Eigen::Vector3d d1 = vertices_[tri[1]] - vertices_[tri[0]];
    const Eigen::Vector3d d2 = vertices_[tri[2]] - vertices_[tri[0]];
    LocalFrame f;
    const Eigen::Vector3d e1 = d1.normalized();
    const Eigen::Vector3d nrm = d1.cross(d2).normalized();
    const Eigen::Vector3d e2 = nrm.cross(e1);
    f.frame.col(0) = e1;
    f.frame.col(1) = e2;
    f.corners.col(0).setZero();
    f.corners.col(1) << d1.norm(), 0.0;
    f.corners.col(2) << e1.dot(d2), e2.dot(d2);
    f.area = reference_areas_[t];
    return f;
}

void TriangleMesh::set_reference_neighbors(std::vector<int> refs) {
    if (static_cast<int>(refs.size()) != num_vertices()) throw ValidationError("mesh: reference neighbour size");
    for (int v = 0; v < num_vertices(); ++v) {
        if (refs[v] < 0) continue;
        const auto& nb = vertex_neighbors_[v];
        if (!std::binary_search(nb.begin(), nb.end(), refs[v]))
            throw ValidationError("mesh: reference neighbour is not adjacent");
    }
    reference_neighbor_ = std::move(refs);
}

TriangleMesh build_icosphere(int subdivisions) {
    if (subdivisions < 0 || subdivisions > 7) throw ValidationError("icosphere: subdivisions must lie in [0, 7]");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
        {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& p : v) p.normalize();

    // Rotate so that vertex 0 sits at the north pole.
    const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(v[0], Eigen::Vector3d::UnitZ());
    for (auto& p : v) p = (q * p).normalized();
    v[0] = Eigen::Vector3d::UnitZ();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> g;
        g.reserve(4 * f.size());
        for (const auto& t : f) {
            const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
            g.push_back({t[0], a, c});
            g.push_back({t[1], b, a});
            g.push_back({t[2], c, b});
            g.push_back({a, b, c});
        }
        f = std::move(g);
    }
    return TriangleMesh(std::move(v), std::move(f), Topology::sphere);
}

TriangleMesh build_tetrahedral_sphere() {
    const double s = 1.0 / std::sqrt(3.0);
    std::vector<Eigen::Vector3d> v = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    std::vector<std::array<int, 3>> f = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return TriangleMesh(std::move(v), std::move(f), Topology::sphere);
}

std::vector<int> ring_neighborhood(const TriangleMesh& mesh, const std::vector<int>& seeds, int rings) {
    std::vector<char> in(mesh.num_vertices(), 0);
    std::vector<int> frontier;
    for (int s : seeds) {
        if (s < 0 || s >= mesh.num_vertices()) throw ValidationError("ring_neighborhood: bad vertex id");
        if (!in[s]) {
            in[s] = 1;
            frontier.push_back(s);
        }
    }
    for (int r = 0; r < rings; ++r) {
        std::vector<int> next;
        for (int v : frontier)
            for (int w : mesh.vertex_neighbors(v))
                if (!in[w]) {
                    in[w] = 1;
                    next.push_back(w);
                }
        frontier = std::move(next);
    }
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (in[v]) out.push_back(v);
    return out;
}

std::vector<int> nonsingular_set(const TriangleMesh& mesh, int margin) {
    std::vector<char> excluded(mesh.num_vertices(), 0);
    if (!mesh.singular_vertices().empty())
        for (int v : ring_neighborhood(mesh, mesh.singular_vertices(), std::max(margin, 0))) excluded[v] = 1;
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (!excluded[v]) out.push_back(v);
    return out;
}

} // namespace geoflow
