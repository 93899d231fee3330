#include "geoflow/run.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoflow/coefficients.hpp"
#include "geoflow/continuity.hpp"
#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/gm_flow.hpp"
#include "geoflow/heat_kernel.hpp"
#include "geoflow/kato.hpp"
#include "geoflow/mesh_io.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/spectral.hpp"
#include "geoflow/text_io.hpp"

namespace geoflow {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    if (out.empty() || std::any_of(out.begin(), out.end(), [](const auto& x) { return x.empty(); }))
        throw ValidationError("config: malformed list '" + s + "'");
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
    T v{};
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ValidationError("config: " + key + " = '" + s + "' is not a valid number");
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(v)) throw ValidationError("config: " + key + " must be finite");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ValidationError("config: " + key + " must be true or false");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) out.push_back(parse_number<T>(key, item));
    return out;
}

/// Shortest decimal text that reads back to the same double.
std::string num(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}
std::string num(int x) { return std::to_string(x); }

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += num(xs[i]);
    }
    return out;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError("config: " + what);
}

// ---------------------------------------------------------------------------
// Artifacts are assembled in memory and written only once the run has finished.

class Table {
public:
    explicit Table(const std::vector<std::string>& header) : columns_(header.size()) { add(header); }
    void row(const std::vector<std::string>& fields) {
        if (fields.size() != columns_) throw ConsistencyError("table: wrong column count");
        add(fields);
    }
    const std::string& text() const { return text_; }

private:
    void add(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) text_ += (i ? "," : "") + fields[i];
        text_ += "\n";
    }
    std::size_t columns_;
    std::string text_;
};


struct Artifacts {
    std::vector<std::pair<std::string, std::string>> files;
    json checks = json::object();
    json scalars = json::object();

    void add(const std::string& name, std::string content) { files.emplace_back(name, std::move(content)); }
    void check(const std::string& name, bool pass) { checks[name] = pass; }
};

struct BuiltMesh {
    TriangleMesh mesh;
    RoughMetric metric;
    std::optional<double> ricci;  ///< constant Ric(v, v) / |v|^2 when known in closed form
};

BuiltMesh build_mesh(const RunConfig::Mesh& m, std::optional<int> level = {}) {
    const int sub = level.value_or(m.subdivisions);
    if (m.kind == "icosphere") {
        auto mesh = build_icosphere(sub);
        auto g = RoughMetric::induced(mesh);
        return {std::move(mesh), std::move(g), 1.0};
    }
    if (m.kind == "cone_sphere") {
        auto c = build_cone_sphere(m.cone_angle, sub);
        return {std::move(c.mesh), std::move(c.metric), std::nullopt};
    }
    if (m.kind == "flat_torus") {
        auto t = build_flat_torus(m.torus_n, m.torus_n, m.torus_side, m.torus_side);
        return {std::move(t.mesh), std::move(t.metric), 0.0};
    }
    if (m.kind == "tetrahedral") {
        auto mesh = build_tetrahedral_sphere();
        auto g = RoughMetric::induced(mesh);
        return {std::move(mesh), std::move(g), std::nullopt};
    }
    auto file = read_mesh(m.path);
    auto g = file.metric ? *file.metric : RoughMetric::induced(file.mesh);
    return {std::move(file.mesh), std::move(g), std::nullopt};
}

CoefficientField make_coefficients(const RunConfig& cfg, const TriangleMesh& mesh) {
    const auto& c = cfg.coefficients;
    const int nt = mesh.num_triangles();
    if (c.kind == "identity") return CoefficientField::identity(nt);
    const std::uint64_t seed = *cfg.seed;
    if (c.kind == "random_symmetric") return random_symmetric_field(nt, c.kappa, c.Lambda, CounterRng(seed, 1));
    if (c.kind == "random_complex") return random_complex_field(nt, c.kappa, c.Lambda, CounterRng(seed, 1));
    return ambient_complex_field(mesh, c.kappa, c.Lambda, seed);
}

std::optional<Eigen::VectorXcd> make_multiplier(const RunConfig& cfg, const TriangleMesh& mesh, std::uint64_t offset) {
    if (!cfg.coefficients.multiplier) return std::nullopt;
    return ambient_multiplier(mesh, cfg.coefficients.multiplier_kappa, *cfg.seed + offset);
}

double relative_drift(const std::vector<double>& xs) {
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    return (*hi - *lo) / *lo;
}

// ---------------------------------------------------------------------------
// Commands

void run_mesh(const RunConfig& cfg, Artifacts& art) {
    const auto b = build_mesh(cfg.mesh);
    std::ostringstream mesh_text;
    write_mesh(mesh_text, b.mesh, &b.metric);
    art.add("mesh.txt", mesh_text.str());
    const auto a = assemble(b.mesh, b.metric);
    const SparseMatrix K = stiffness_matrix_real(
        *a, std::vector<Eigen::Matrix2d>(b.mesh.num_triangles(), Eigen::Matrix2d::Identity()));
    std::ostringstream kt, mt;
    write_triplets(kt, K);
    write_triplets(mt, a->spaces.mass);
    art.add("laplacian.triplets", kt.str());
    art.add("mass.triplets", mt.str());
    const int chi = b.mesh.euler_characteristic();
    art.scalars["vertices"] = b.mesh.num_vertices();
    art.scalars["triangles"] = b.mesh.num_triangles();
    art.scalars["edges"] = b.mesh.num_edges();
    art.scalars["euler_characteristic"] = chi;
    art.scalars["total_measure"] = a->spaces.total_measure;
    art.scalars["metric_kappa_lo"] = b.metric.kappa_lo();
    art.scalars["metric_kappa_hi"] = b.metric.kappa_hi();
    const auto topo = b.mesh.topology();
    art.check("euler_characteristic", topo == Topology::unknown || chi == (topo == Topology::sphere ? 2 : 0));
    art.check("laplacian_kills_constants",
              (K * Eigen::VectorXd::Ones(b.mesh.num_vertices())).cwiseAbs().maxCoeff() <= 1e-10 * K.diagonal().maxCoeff());
}

void run_spectrum(const RunConfig& cfg, Artifacts& art) {
    if (cfg.coefficients.kind == "random_complex" || cfg.coefficients.kind == "ambient_complex")
        throw ValidationError("spectrum: requires real symmetric coefficients");
    const auto b = build_mesh(cfg.mesh);
    const auto a = assemble(b.mesh, b.metric);
    const int n = b.mesh.num_vertices();
    if (cfg.spectrum.modes > n) throw ValidationError("spectrum: more modes than vertices");
    const auto op = make_operator(a, make_coefficients(cfg, b.mesh));
    const auto lap = make_operator(a, CoefficientField::identity(b.mesh.num_triangles()));
    const auto spec = eigensolve(op, cfg.spectrum.modes);
    const auto lspec = eigensolve(lap, std::min(n, std::max(2, cfg.spectrum.modes)));

    Table ev({"index", "eigenvalue", "laplacian_eigenvalue"});
    for (int k = 0; k < spec.count(); ++k)
        ev.row({num(k), num(spec.values[k]), k < lspec.count() ? num(lspec.values[k]) : std::string("nan")});
    art.add("eigenvalues.csv", ev.text());

    // Sample mean-zero problem: L u = (height function minus its mean).
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f[i] = b.mesh.vertex(i).z();
    f = a->spaces.mean_zero_part(f);
    SolveReport report;
    const Eigen::VectorXd u = f.norm() > 0.0 ? solve_mean_zero(op, f, SolveMethod::automatic, &report)
                                             : Eigen::VectorXd::Zero(n);
    Table sol({"vertex_id", "value"});
    for (int i = 0; i < n; ++i) sol.row({num(i), num(u[i])});
    art.add("solution.csv", sol.text());

    const double kappa = measured_kappa(op.coefficients());
    art.scalars["lambda1"] = spec.values[1];
    art.scalars["laplacian_lambda1"] = lspec.values[1];
    art.scalars["poincare_constant"] = poincare_constant(lspec);
    art.scalars["kappa"] = kappa;
    art.scalars["eigen_residual"] = spec.max_residual;
    art.scalars["solve_relative_residual"] = report.relative_residual;
    art.check("spectral_gap", kappa * lspec.values[1] <= spec.values[1] * (1.0 + 1e-10));
    art.check("eigen_residual", spec.max_residual <= 1e-8);
    art.check("solve_residual", report.relative_residual <= 1e-9);
}

void run_heat_kernel(const RunConfig& cfg, Artifacts& art) {
    const auto b = build_mesh(cfg.mesh);
    const int n = b.mesh.num_vertices();
    for (int x : cfg.heat_kernel.vertices)
        if (x < 0 || x >= n) throw ValidationError("heat-kernel: vertex " + std::to_string(x) + " out of range");
    if (cfg.heat_kernel.modes > n) throw ValidationError("heat-kernel: more modes than vertices");
    const auto hk = build_heat_kernel(b.mesh, b.metric, b.metric, cfg.heat_kernel.modes);
    for (double t : cfg.heat_kernel.times)
        if (!(t >= hk->t_min()))
            throw TruncationError("heat-kernel: t = " + format_double(t) + " below certified t_min = " +
                                      format_double(hk->t_min()),
                                  hk->t_min());
    const Eigen::VectorXd& mu = hk->measure();
    double mass_err = 0.0, sym_err = 0.0, semigroup_err = 0.0;
    bool positive = true;
    for (std::size_t ti = 0; ti < cfg.heat_kernel.times.size(); ++ti) {
        const double t = cfg.heat_kernel.times[ti];
        std::vector<KernelSlice> slices;
        for (int x : cfg.heat_kernel.vertices) {
            const auto s = kernel_slice(*hk, x, t);
            Table tab({"y_vertex", "value"});
            for (int y = 0; y < n; ++y) tab.row({num(y), num(s.values[y])});
            art.add("kernel_x" + std::to_string(x) + "_t" + std::to_string(ti) + ".csv", tab.text());
            mass_err = std::max(mass_err, std::abs(mu.dot(s.values) - 1.0));
            positive = positive && s.values.minCoeff() >= -s.resolution;
            slices.push_back(s);
        }
        const double scale = hk->max_diagonal(t);
        const auto& xs = cfg.heat_kernel.vertices;
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (std::size_t j = 0; j < xs.size(); ++j)
                sym_err = std::max(sym_err, std::abs(slices[i].values[xs[j]] - slices[j].values[xs[i]]) / scale);
        if (t / 2.0 >= hk->t_min()) {
            std::vector<Eigen::VectorXd> half;
            for (int x : xs) half.push_back(kernel_slice(*hk, x, t / 2.0).values);
            for (std::size_t i = 0; i < xs.size(); ++i)
                for (std::size_t j = 0; j < xs.size(); ++j) {
                    const double composed = half[i].cwiseProduct(mu).dot(half[j]);
                    semigroup_err = std::max(semigroup_err, std::abs(composed - slices[i].values[xs[j]]) / scale);
                }
        }
    }
    art.scalars["t_min"] = hk->t_min();
    art.scalars["lambda1"] = hk->spec().values[1];
    art.scalars["modes"] = hk->K();
    art.scalars["mass_error"] = mass_err;
    art.scalars["symmetry_error"] = sym_err;
    art.scalars["semigroup_error"] = semigroup_err;
    art.check("mass", mass_err <= 1e-10);
    art.check("symmetry", sym_err <= 1e-10);
    art.check("positivity", positive);
    art.check("semigroup", semigroup_err <= 1e-8);
}

void run_kato(const RunConfig& cfg, Artifacts& art) {
    if (cfg.mesh.kind != "icosphere") throw ValidationError("kato: runs on icosphere refinement levels");
    const std::uint64_t seed = *cfg.seed;
    const auto& k = cfg.kato;
    Table levels({"level", "c_low", "c_high"});
    Table coercivity({"level", "C1", "C2"});
    std::vector<double> lows, highs, c1s, c2s;
    json per_level = json::array();
    for (int level : k.levels) {
        const auto b = build_mesh(cfg.mesh, level);
        const auto a = assemble(b.mesh, b.metric);
        const auto B = make_coefficients(cfg, b.mesh);
        const Eigen::MatrixXcd probes =
            kato_probes(*a, k.eigen_probes, k.random_probes, CounterRng(seed, 2)).cast<std::complex<double>>();
        const auto r = kato_ratio(a, B, make_multiplier(cfg, b.mesh, 0), probes);
        const auto c = coercivity_check(b.mesh, a, k.coercivity_modes);
        levels.row({num(level), num(r.c_low), num(r.c_high)});
        coercivity.row({num(level), num(c.C1), num(c.C2)});
        lows.push_back(r.c_low);
        highs.push_back(r.c_high);
        c1s.push_back(c.C1);
        c2s.push_back(c.C2);
        per_level.push_back({{"level", level}, {"c_low", r.c_low}, {"c_high", r.c_high}, {"C1", c.C1}, {"C2", c.C2}});
    }
    art.add("kato_levels.csv", levels.text());
    art.add("coercivity.csv", coercivity.text());

    // Lipschitz sweep on the first level.
    const auto b = build_mesh(cfg.mesh, k.levels.front());
    const auto a = assemble(b.mesh, b.metric);
    const int nt = b.mesh.num_triangles();
    const auto B = make_coefficients(cfg, b.mesh);
    const auto dir = random_complex_field(nt, cfg.coefficients.kappa, cfg.coefficients.Lambda, CounterRng(seed, 3));
    const Eigen::MatrixXcd probes =
        kato_probes(*a, k.eigen_probes, k.random_probes, CounterRng(seed, 2)).cast<std::complex<double>>();
    const auto sweep =
        lipschitz_sweep(a, B, make_multiplier(cfg, b.mesh, 0), dir, make_multiplier(cfg, b.mesh, 1), k.magnitudes, probes);
    Table lip({"magnitude", "lipschitz_ratio"});
    for (const auto& row : sweep.rows) lip.row({num(row.magnitude), num(row.ratio)});
    art.add("lipschitz.csv", lip.text());

    art.scalars["levels"] = per_level;
    art.scalars["c_low"] = lows.back();
    art.scalars["c_high"] = highs.back();
    art.scalars["C1"] = c1s.back();
    art.scalars["C2"] = c2s.back();
    art.scalars["lipschitz_slope"] = sweep.slope;
    art.scalars["kato_drift"] = std::max(relative_drift(lows), relative_drift(highs));
    art.scalars["coercivity_drift"] = std::max(relative_drift(c1s), relative_drift(c2s));
    art.check("kato_positive", *std::min_element(lows.begin(), lows.end()) > 0.0);
    art.check("kato_drift", std::max(relative_drift(lows), relative_drift(highs)) < 0.2);
    art.check("lipschitz_slope", std::abs(sweep.slope - 1.0) <= 0.1);
    art.check("coercivity_drift", std::max(relative_drift(c1s), relative_drift(c2s)) < 0.2);
}

void run_flow(const RunConfig& cfg, Artifacts& art) {
    const auto& f = cfg.flow;
    const auto b = build_mesh(cfg.mesh);
    const auto setup = make_flow_setup(b.mesh, b.metric, b.metric);
    const auto N = default_nonsingular_set(b.mesh, f.exclusion_rings);
    if (std::find(N.begin(), N.end(), f.vertex) == N.end())
        throw ValidationError("flow: vertex " + std::to_string(f.vertex) + " is not in the non-singular set");
    auto ct = std::find_if(f.times.begin(), f.times.end(),
                           [&](double t) { return std::abs(t - f.continuity_time) <= 1e-12 * t; });
    if (f.full && ct == f.times.end()) throw ValidationError("flow: continuity_time must be one of the times");

    FlowConfig fc{f.times, f.full ? N : std::vector<int>{f.vertex}, cfg.threads};
    validate_flow_config(setup, fc);
    const auto flow = compute_flow(setup, fc);

    Table gt({"t", "vertex", "g11", "g12", "g22"});
    for (std::size_t ti = 0; ti < flow.times.size(); ++ti)
        for (std::size_t i = 0; i < flow.vertices.size(); ++i) {
            const auto& G = flow.samples[ti][i].pairing;
            gt.row({num(flow.times[ti]), num(flow.vertices[i]), num(G(0, 0)), num(G(0, 1)), num(G(1, 1))});
        }
    art.add("flow.csv", gt.text());

    const std::size_t vi = std::find(flow.vertices.begin(), flow.vertices.end(), f.vertex) - flow.vertices.begin();
    const std::vector<Eigen::Vector2d> dirs{Eigen::Vector2d::UnitX(), Eigen::Vector2d::UnitY(),
                                            Eigen::Vector2d(1.0, 1.0).normalized()};
    Table tan({"t", "vertex", "direction", "value", "slope_fit"});
    std::vector<TangencyResult> fits;
    for (const auto& v : dirs) fits.push_back(ricci_tangency(flow, vi, v));
    for (std::size_t ti = 0; ti < flow.times.size(); ++ti)
        for (std::size_t d = 0; d < dirs.size(); ++d)
            tan.row({num(flow.times[ti]), num(f.vertex), num(static_cast<int>(d)), num(fits[d].values[ti]),
                     num(fits[d].slope)});
    art.add("tangency.csv", tan.text());

    bool resolved = true, ricci_ok = true;
    json slopes = json::array();
    for (const auto& r : fits) {
        resolved = resolved && r.resolved;
        slopes.push_back(r.slope);
        if (b.ricci) {
            const double expected = -2.0 * *b.ricci * r.v.squaredNorm();
            const double tol = *b.ricci == 0.0 ? 0.05 * r.v.squaredNorm() : 0.1 * std::abs(expected);
            ricci_ok = ricci_ok && std::abs(r.slope - expected) <= tol;
        }
    }
    art.scalars["tangency_slope"] = fits.front().slope;
    art.scalars["tangency_slopes"] = slopes;
    art.scalars["tangency_fit_residual"] = fits.front().fit_residual;
    art.scalars["max_form_gap"] = flow.max_form_gap;
    art.scalars["max_asymmetry"] = flow.max_asymmetry;
    art.scalars["nonsingular_vertices"] = static_cast<int>(N.size());
    art.check("form_agreement", flow.max_form_gap <= 1e-8);
    art.check("symmetric_positive_definite", flow.all_positive_definite && flow.max_asymmetry <= 1e-8);
    art.check("tangency_resolved", resolved);
    if (b.ricci) art.check("ricci_tangency", ricci_ok);

    if (f.full) {
        const auto table = continuity_modulus(setup, flow, static_cast<std::size_t>(ct - f.times.begin()));
        Table cont({"t", "edge_v0", "edge_v1", "edge_length", "frobenius_diff"});
        Table scal({"t", "edge_v0", "edge_v1", "edge_length", "trace_diff"});
        for (const auto& r : table.rows) {
            cont.row({num(table.t), num(r.v0), num(r.v1), num(r.edge_length), num(r.frobenius_diff)});
            scal.row({num(table.t), num(r.v0), num(r.v1), num(r.edge_length), num(r.trace_diff)});
        }
        art.add("continuity.csv", cont.text());
        art.add("continuity_scalar.csv", scal.text());
        art.scalars["continuity_max_diff"] = table.max_diff;
        art.scalars["continuity_max_ratio"] = table.max_ratio;
    }
}

void run_continuity(const RunConfig& cfg, Artifacts& art) {
    const auto& c = cfg.continuity;
    const auto b = build_mesh(cfg.mesh);
    if (b.mesh.num_vertices() > 3000) throw ValidationError("continuity: dense square roots need <= 3000 vertices");
    const auto a = assemble(b.mesh, b.metric, MassKind::lumped);
    const std::uint64_t seed = *cfg.seed;
    const auto family = random_family(a, cfg.coefficients.kappa, cfg.coefficients.Lambda, c.margin, CounterRng(seed, 5));
    for (double m : c.magnitudes)
        if (std::abs(m) > c.margin) throw ValidationError("continuity: magnitude exceeds the margin");
    for (double m : c.sqrt_magnitudes)
        if (std::abs(m) > c.margin) throw ValidationError("continuity: magnitude exceeds the margin");

    const auto sweep = solution_difference_sweep(family, c.magnitudes);
    Table sol({"magnitude", "lhs_norm", "rhs_bound", "ratio"});
    for (const auto& r : sweep.rows) sol.row({num(r.magnitude), num(r.lhs_norm), num(r.rhs_bound), num(r.ratio)});
    art.add("solution_difference.csv", sol.text());

    const Eigen::MatrixXd probes = kato_probes(*a, 10, 10, CounterRng(seed, 6));
    const auto roots = sqrt_difference_sweep(family, c.sqrt_magnitudes, probes);
    Table sq({"magnitude", "sqrt_ratio"});
    for (const auto& r : roots.rows) sq.row({num(r.magnitude), num(r.ratio)});
    art.add("sqrt_difference.csv", sq.text());

    const auto setup = make_flow_setup(b.mesh, b.metric, b.metric);
    const auto N = default_nonsingular_set(b.mesh, 2);
    if (N.empty()) throw ValidationError("continuity: no non-singular vertex");
    const int x = N.front();
    int y = -1;
    for (int w : b.mesh.vertex_neighbors(x))
        if (std::find(N.begin(), N.end(), w) != N.end()) {
            y = w;
            break;
        }
    if (y < 0) throw ValidationError("continuity: no non-singular neighbour");
    const auto inst = heat_kernel_instance(setup, x, y, c.kernel_time, Eigen::Vector2d::UnitX());

    art.scalars["kappa_x"] = sweep.kappa_x;
    art.scalars["lambda1"] = sweep.lambda1;
    art.scalars["max_ratio"] = sweep.max_ratio;
    art.scalars["smallest_relative_difference"] = sweep.smallest_relative;
    art.scalars["sqrt_slope"] = roots.slope;
    art.scalars["kernel_instance"] = {{"x", inst.x},         {"y", inst.y},
                                      {"t", inst.t},         {"lhs", inst.lhs},
                                      {"constant", inst.constant}, {"explicit_bound", inst.explicit_bound},
                                      {"ratio", inst.ratio}};
    art.check("bound_respected", sweep.max_ratio <= 1.0 + 1e-8);
    art.check("monotone_decrease", sweep.monotone);
    art.check("vanishing_difference", sweep.smallest_relative < 1e-6);
    art.check("sqrt_slope", std::abs(roots.slope - 1.0) <= 0.1);
    art.check("kernel_instance_bound", inst.ratio <= 1.0 + 1e-8);
}

bool needs_seed(const RunConfig& cfg) {
    if (cfg.command == "kato" || cfg.command == "continuity") return true;
    if (cfg.command == "spectrum") return cfg.coefficients.kind != "identity";
    return false;
}

void write_artifacts(const std::string& dir, const Artifacts& art, const json& summary) {
    std::filesystem::create_directories(dir);
    auto put = [&](const std::string& name, const std::string& content) {
        std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
        out << content;
        if (!out) throw Error("cannot write " + name);
    };
    for (const auto& [name, content] : art.files) put(name, content);
    put("summary.json", summary.dump(2) + "\n");
}

} // namespace

// ---------------------------------------------------------------------------

ConfigFile parse_config(std::istream& in) {
    ConfigFile cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ValidationError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ValidationError(where + "empty section name");
            cfg.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
        if (section.empty()) throw ValidationError(where + "key outside of a section");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ValidationError(where + "empty key or value");
        if (!cfg.sections[section].emplace(key, value).second)
            throw ValidationError(where + "duplicate key " + section + "." + key);
    }
    return cfg;
}

ConfigFile read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    return parse_config(in);
}

RunConfig make_run_config(const ConfigFile& file) {
    RunConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"run.command", [&](auto&, auto& v) { c.command = v; }},
        {"run.seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
        {"run.output", [&](auto&, auto& v) { c.output = v; }},
        {"run.threads", [&](auto& k, auto& v) { c.threads = parse_number<int>(k, v); }},
        {"mesh.kind", [&](auto&, auto& v) { c.mesh.kind = v; }},
        {"mesh.subdivisions", [&](auto& k, auto& v) { c.mesh.subdivisions = parse_number<int>(k, v); }},
        {"mesh.cone_angle", [&](auto& k, auto& v) { c.mesh.cone_angle = parse_number<double>(k, v); }},
        {"mesh.torus_n", [&](auto& k, auto& v) { c.mesh.torus_n = parse_number<int>(k, v); }},
        {"mesh.torus_side", [&](auto& k, auto& v) { c.mesh.torus_side = parse_number<double>(k, v); }},
        {"mesh.path", [&](auto&, auto& v) { c.mesh.path = v; }},
        {"coefficients.kind", [&](auto&, auto& v) { c.coefficients.kind = v; }},
        {"coefficients.kappa", [&](auto& k, auto& v) { c.coefficients.kappa = parse_number<double>(k, v); }},
        {"coefficients.Lambda", [&](auto& k, auto& v) { c.coefficients.Lambda = parse_number<double>(k, v); }},
        {"coefficients.multiplier", [&](auto& k, auto& v) { c.coefficients.multiplier = parse_bool(k, v); }},
        {"coefficients.multiplier_kappa",
         [&](auto& k, auto& v) { c.coefficients.multiplier_kappa = parse_number<double>(k, v); }},
        {"spectrum.modes", [&](auto& k, auto& v) { c.spectrum.modes = parse_number<int>(k, v); }},
        {"heat_kernel.times", [&](auto& k, auto& v) { c.heat_kernel.times = parse_list<double>(k, v); }},
        {"heat_kernel.vertices", [&](auto& k, auto& v) { c.heat_kernel.vertices = parse_list<int>(k, v); }},
        {"heat_kernel.modes", [&](auto& k, auto& v) { c.heat_kernel.modes = parse_number<int>(k, v); }},
        {"kato.levels", [&](auto& k, auto& v) { c.kato.levels = parse_list<int>(k, v); }},
        {"kato.magnitudes", [&](auto& k, auto& v) { c.kato.magnitudes = parse_list<double>(k, v); }},
        {"kato.eigen_probes", [&](auto& k, auto& v) { c.kato.eigen_probes = parse_number<int>(k, v); }},
        {"kato.random_probes", [&](auto& k, auto& v) { c.kato.random_probes = parse_number<int>(k, v); }},
        {"kato.coercivity_modes", [&](auto& k, auto& v) { c.kato.coercivity_modes = parse_number<int>(k, v); }},
        {"flow.times", [&](auto& k, auto& v) { c.flow.times = parse_list<double>(k, v); }},
        {"flow.vertex", [&](auto& k, auto& v) { c.flow.vertex = parse_number<int>(k, v); }},
        {"flow.exclusion_rings", [&](auto& k, auto& v) { c.flow.exclusion_rings = parse_number<int>(k, v); }},
        {"flow.continuity_time", [&](auto& k, auto& v) { c.flow.continuity_time = parse_number<double>(k, v); }},
        {"flow.full", [&](auto& k, auto& v) { c.flow.full = parse_bool(k, v); }},
        {"continuity.magnitudes", [&](auto& k, auto& v) { c.continuity.magnitudes = parse_list<double>(k, v); }},
        {"continuity.sqrt_magnitudes",
         [&](auto& k, auto& v) { c.continuity.sqrt_magnitudes = parse_list<double>(k, v); }},
        {"continuity.margin", [&](auto& k, auto& v) { c.continuity.margin = parse_number<double>(k, v); }},
        {"continuity.kernel_time", [&](auto& k, auto& v) { c.continuity.kernel_time = parse_number<double>(k, v); }},
    };
    for (const auto& [section, keys] : file.sections)
        for (const auto& [key, value] : keys) {
            const std::string full = section + "." + key;
            const auto it = setters.find(full);
            if (it == setters.end()) throw ValidationError("config: unknown key " + full);
            it->second(full, value);
        }

    static const std::vector<std::string> commands{"mesh", "spectrum", "heat-kernel", "kato", "flow", "continuity"};
    require(std::find(commands.begin(), commands.end(), c.command) != commands.end(),
            "run.command must be one of mesh, spectrum, heat-kernel, kato, flow, continuity");
    require(c.threads >= 1 && c.threads <= 256, "run.threads must lie in [1, 256]");
    static const std::vector<std::string> kinds{"icosphere", "cone_sphere", "flat_torus", "tetrahedral", "file"};
    require(std::find(kinds.begin(), kinds.end(), c.mesh.kind) != kinds.end(), "unknown mesh.kind " + c.mesh.kind);
    require(c.mesh.subdivisions >= 0 && c.mesh.subdivisions <= 6, "mesh.subdivisions must lie in [0, 6]");
    require(c.mesh.cone_angle > 0.0 && c.mesh.cone_angle <= 2.0 * std::numbers::pi * (1 + 1e-14),
            "mesh.cone_angle must lie in (0, 2 pi]");
    require(c.mesh.torus_n >= 3 && c.mesh.torus_n <= 256, "mesh.torus_n must lie in [3, 256]");
    require(c.mesh.torus_side > 0.0, "mesh.torus_side must be positive");
    require(c.mesh.kind != "file" || !c.mesh.path.empty(), "mesh.path is required for mesh.kind = file");
    static const std::vector<std::string> coef{"identity", "random_symmetric", "random_complex", "ambient_complex"};
    require(std::find(coef.begin(), coef.end(), c.coefficients.kind) != coef.end(),
            "unknown coefficients.kind " + c.coefficients.kind);
    require(c.coefficients.kappa > 0.0 && c.coefficients.kappa <= c.coefficients.Lambda,
            "coefficients need 0 < kappa <= Lambda");
    require(c.coefficients.multiplier_kappa > 0.0, "coefficients.multiplier_kappa must be positive");
    require(c.spectrum.modes >= 2, "spectrum.modes must be at least 2");
    require(!c.heat_kernel.times.empty() && !c.heat_kernel.vertices.empty(), "heat_kernel needs times and vertices");
    for (double t : c.heat_kernel.times) require(t > 0.0, "heat_kernel.times must be positive");
    require(c.heat_kernel.modes == -1 || c.heat_kernel.modes >= 2, "heat_kernel.modes must be -1 or >= 2");
    require(!c.kato.levels.empty(), "kato.levels must not be empty");
    for (int l : c.kato.levels) require(l >= 0 && l <= 4, "kato.levels must lie in [0, 4]");
    require(c.kato.magnitudes.size() >= 2, "kato.magnitudes needs at least two entries");
    for (double m : c.kato.magnitudes) require(m >= 0.0, "kato.magnitudes must be nonnegative");
    require(c.kato.eigen_probes >= 0 && c.kato.random_probes >= 0 && c.kato.eigen_probes + c.kato.random_probes >= 1,
            "kato needs at least one probe");
    require(c.kato.coercivity_modes >= 1, "kato.coercivity_modes must be positive");
    require(c.flow.times.size() >= 3, "flow.times needs at least three entries");
    for (double t : c.flow.times) require(t > 0.0, "flow.times must be positive");
    require(c.flow.exclusion_rings >= 0, "flow.exclusion_rings must be nonnegative");
    require(c.continuity.margin > 0.0 && c.continuity.margin < c.coefficients.kappa,
            "continuity.margin must lie in (0, coefficients.kappa)");
    require(!c.continuity.magnitudes.empty() && c.continuity.sqrt_magnitudes.size() >= 2,
            "continuity needs magnitudes and at least two sqrt_magnitudes");
    require(c.continuity.kernel_time > 0.0, "continuity.kernel_time must be positive");
    if (needs_seed(c) && !c.seed) throw ValidationError("config: run.seed is required for randomized runs");
    return c;
}

ConfigFile echo_config(const RunConfig& c) {
    ConfigFile f;
    auto& run = f.sections["run"];
    run["command"] = c.command;
    if (c.seed) run["seed"] = std::to_string(*c.seed);
    auto& mesh = f.sections["mesh"];
    mesh["kind"] = c.mesh.kind;
    mesh["subdivisions"] = std::to_string(c.mesh.subdivisions);
    mesh["cone_angle"] = num(c.mesh.cone_angle);
    mesh["torus_n"] = std::to_string(c.mesh.torus_n);
    mesh["torus_side"] = num(c.mesh.torus_side);
    if (!c.mesh.path.empty()) mesh["path"] = c.mesh.path;
    auto& coef = f.sections["coefficients"];
    coef["kind"] = c.coefficients.kind;
    coef["kappa"] = num(c.coefficients.kappa);
    coef["Lambda"] = num(c.coefficients.Lambda);
    coef["multiplier"] = c.coefficients.multiplier ? "true" : "false";
    coef["multiplier_kappa"] = num(c.coefficients.multiplier_kappa);
    f.sections["spectrum"]["modes"] = std::to_string(c.spectrum.modes);
    auto& hk = f.sections["heat_kernel"];
    hk["times"] = join(c.heat_kernel.times);
    hk["vertices"] = join(c.heat_kernel.vertices);
    hk["modes"] = std::to_string(c.heat_kernel.modes);
    auto& k = f.sections["kato"];
    k["levels"] = join(c.kato.levels);
    k["magnitudes"] = join(c.kato.magnitudes);
    k["eigen_probes"] = std::to_string(c.kato.eigen_probes);
    k["random_probes"] = std::to_string(c.kato.random_probes);
    k["coercivity_modes"] = std::to_string(c.kato.coercivity_modes);
    auto& fl = f.sections["flow"];
    fl["times"] = join(c.flow.times);
    fl["vertex"] = std::to_string(c.flow.vertex);
    fl["exclusion_rings"] = std::to_string(c.flow.exclusion_rings);
    fl["continuity_time"] = num(c.flow.continuity_time);
    fl["full"] = c.flow.full ? "true" : "false";
    auto& ct = f.sections["continuity"];
    ct["magnitudes"] = join(c.continuity.magnitudes);
    ct["sqrt_magnitudes"] = join(c.continuity.sqrt_magnitudes);
    ct["margin"] = num(c.continuity.margin);
    ct["kernel_time"] = num(c.continuity.kernel_time);
    return f;
}

RunOutcome run(const RunConfig& cfg) {
    RunOutcome outcome;
    if (cfg.output.empty()) {
        outcome.exit_code = 1;
        outcome.message = "no output directory (set run.output or --out)";
        return outcome;
    }
    Artifacts art;
    try {
        if (cfg.command == "mesh") run_mesh(cfg, art);
        else if (cfg.command == "spectrum") run_spectrum(cfg, art);
        else if (cfg.command == "heat-kernel") run_heat_kernel(cfg, art);
        else if (cfg.command == "kato") run_kato(cfg, art);
        else if (cfg.command == "flow") run_flow(cfg, art);
        else if (cfg.command == "continuity") run_continuity(cfg, art);
        else throw ValidationError("unknown command " + cfg.command);
    } catch (const ValidationError& e) {
        return {1, {}, e.what()};
    } catch (const TruncationError& e) {
        return {1, {}, e.what()};
    } catch (const Error& e) {
        // Numerical breakdown: record it as a failed check, nothing else is written.
        art.files.clear();
        art.checks = json::object();
        art.check("computation", false);
        art.scalars = {{"error", e.what()}};
    }

    json summary;
    summary["version"] = GEOFLOW_VERSION;
    summary["command"] = cfg.command;
    json echo = json::object();
    for (const auto& [section, keys] : echo_config(cfg).sections)
        for (const auto& [key, value] : keys) echo[section][key] = value;
    summary["config"] = echo;
    summary["checks"] = art.checks;
    summary["scalars"] = art.scalars;
    for (const auto& [name, pass] : art.checks.items())
        if (!pass.get<bool>()) outcome.failed_checks.push_back(name);
    summary["status"] = outcome.failed_checks.empty() ? "pass" : "fail";
    write_artifacts(cfg.output, art, summary);
    if (!outcome.failed_checks.empty()) {
        outcome.exit_code = 2;
        outcome.message = "failed checks:";
        for (const auto& n : outcome.failed_checks) outcome.message += " " + n;
    }
    return outcome;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"geoflow: rough-metric analysis on triangle meshes"};
    std::string config_path, out_dir;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Sectioned key = value configuration file")->required();
    app.add_option("--out", out_dir, "Output directory (overrides run.output)");
    app.add_option("--threads", threads, "Worker threads (overrides run.threads)");
    app.add_option("--seed", seed, "Random seed (overrides run.seed)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        ConfigFile file = read_config(config_path);
        if (seed) file.sections["run"]["seed"] = std::to_string(*seed);
        if (threads) file.sections["run"]["threads"] = std::to_string(*threads);
        if (!out_dir.empty()) file.sections["run"]["output"] = out_dir;
        const RunConfig cfg = make_run_config(file);
        const RunOutcome r = run(cfg);
        if (r.exit_code != 0) std::cerr << "geoflow: " << r.message << "\n";
        return r.exit_code;
    } catch (const ValidationError& e) {
        std::cerr << "geoflow: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "geoflow: " << e.what() << "\n";
        return 2;
    }
}

} // namespace geoflow
