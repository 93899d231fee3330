#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "geoflow/mesh.hpp"
#include "geoflow/metric.hpp"

namespace geoflow {

struct MeshFile {
    TriangleMesh mesh;
    std::optional<RoughMetric> metric;
};

/// Plain-text `geoflow-mesh v1` format; numbers use 17 significant digits.
void write_mesh(std::ostream& out, const TriangleMesh& mesh, const RoughMetric* metric = nullptr);
void write_mesh(const std::string& path, const TriangleMesh& mesh, const RoughMetric* metric = nullptr);
MeshFile read_mesh(std::istream& in);
MeshFile read_mesh(const std::string& path);

} // namespace geoflow
