#include "geoflow/mesh_io.hpp"

#include <fstream>
#include <sstream>

#include "geoflow/errors.hpp"
#include "geoflow/text_io.hpp"

namespace geoflow {

void write_mesh(std::ostream& out, const TriangleMesh& mesh, const RoughMetric* metric) {
    out << "geoflow-mesh v1\n" << mesh.num_vertices() << '\n';
    for (const auto& p : mesh.vertices())
        out << "v " << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
    out << mesh.num_triangles() << '\n';
    for (const auto& t : mesh.triangles()) out << "f " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (metric) {
        if (metric->mesh_signature() != mesh.signature()) throw ValidationError("write_mesh: metric belongs to another mesh");
        for (const auto& G : metric->tensors())
            out << "m " << format_double(G(0, 0)) << ' ' << format_double(G(0, 1)) << ' ' << format_double(G(1, 1))
                << '\n';
    }
}

void write_mesh(const std::string& path, const TriangleMesh& mesh, const RoughMetric* metric) {
    std::ofstream out(path);
    if (!out) throw ValidationError("write_mesh: cannot open " + path);
    write_mesh(out, mesh, metric);
}

namespace {

std::istringstream next_line(std::istream& in, const char* what) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    throw ValidationError(std::string("read_mesh: unexpected end of file while reading ") + what);
}

double parse_double(std::istream& s, const char* what) {
    std::string tok;
    if (!(s >> tok)) throw ValidationError(std::string("read_mesh: missing ") + what);
    std::size_t used = 0;
    double x = std::stod(tok, &used);
    if (used != tok.size()) throw ValidationError(std::string("read_mesh: malformed ") + what);
    return x;
}

} // namespace

MeshFile read_mesh(std::istream& in) {
    {
        std::string line;
        std::getline(in, line);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != "geoflow-mesh v1") throw ValidationError("read_mesh: bad header");
    }
    long nv = -1, nt = -1;
    next_line(in, "vertex count") >> nv;
    if (nv <= 0) throw ValidationError("read_mesh: bad vertex count");
    std::vector<Eigen::Vector3d> vertices(nv);
    for (long i = 0; i < nv; ++i) {
        auto s = next_line(in, "vertex");
        std::string tag;
        s >> tag;
        if (tag != "v") throw ValidationError("read_mesh: expected vertex line");
        for (int k = 0; k < 3; ++k) vertices[i][k] = parse_double(s, "coordinate");
    }
    next_line(in, "triangle count") >> nt;
    if (nt <= 0) throw ValidationError("read_mesh: bad triangle count");
    std::vector<std::array<int, 3>> triangles(nt);
    for (long i = 0; i < nt; ++i) {
        auto s = next_line(in, "triangle");
        std::string tag;
        s >> tag;
        if (tag != "f" || !(s >> triangles[i][0] >> triangles[i][1] >> triangles[i][2]))
            throw ValidationError("read_mesh: malformed triangle line");
    }
    TriangleMesh mesh(std::move(vertices), std::move(triangles));
    std::vector<Eigen::Matrix2d> tensors;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream s(line);
        std::string tag;
        s >> tag;
        if (tag != "m") throw ValidationError("read_mesh: expected metric line");
        const double g11 = parse_double(s, "g11"), g12 = parse_double(s, "g12"), g22 = parse_double(s, "g22");
        Eigen::Matrix2d G;
        G << g11, g12, g12, g22;
        tensors.push_back(G);
    }
    MeshFile file{std::move(mesh), std::nullopt};
    if (!tensors.empty()) file.metric.emplace(file.mesh, std::move(tensors));
    return file;
}

MeshFile read_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("read_mesh: cannot open " + path);
    return read_mesh(in);
}

} // namespace geoflow
