#include "geoflow/gm_flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"

namespace geoflow {

FlowSetup make_flow_setup(const TriangleMesh& mesh, const RoughMetric& background, const RoughMetric& rough,
                          int modes) {
    FlowSetup s;
    s.mesh = std::make_shared<const TriangleMesh>(mesh);
    s.pair = std::make_shared<const MetricPair>(compare_metrics(background, rough));
    s.background = assemble(mesh, background, MassKind::lumped);
    s.kernel = build_heat_kernel(mesh, rough, background, modes, MassKind::lumped);
    s.coefficient.resize(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) s.coefficient[t] = s.pair->divergence_coefficient(t);
    s.rough_measure = s.kernel->measure();
    return s;
}

std::vector<int> singular_neighbourhood(const TriangleMesh& mesh, int rings) {
    std::vector<int> dist(mesh.num_vertices(), -1);
    std::vector<int> frontier;
    for (int s : mesh.singular_vertices()) {
        if (dist[s] < 0) frontier.push_back(s);
        dist[s] = 0;
    }
    for (int r = 1; r <= rings && !frontier.empty(); ++r) {
        std::vector<int> next;
        for (int v : frontier)
            for (int w : mesh.vertex_neighbors(v))
                if (dist[w] < 0) {
                    dist[w] = r;
                    next.push_back(w);
                }
        frontier = std::move(next);
    }
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (dist[v] >= 0) out.push_back(v);
    return out;
}

std::vector<int> default_nonsingular_set(const TriangleMesh& mesh, int exclusion_rings) {
    const auto bad = singular_neighbourhood(mesh, exclusion_rings);
    std::vector<char> skip(mesh.num_vertices(), 0);
    for (int v : bad) skip[v] = 1;
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (!skip[v]) out.push_back(v);
    return out;
}

void validate_flow_config(const FlowSetup& setup, const FlowConfig& cfg) {
    const auto& mesh = *setup.mesh;
    if (cfg.nonsingular_set.empty()) throw ValidationError("flow: the non-singular set is empty");
    std::vector<char> singular(mesh.num_vertices(), 0);
    for (int s : mesh.singular_vertices()) singular[s] = 1;
    for (int x : cfg.nonsingular_set) {
        if (x < 0 || x >= mesh.num_vertices()) throw ValidationError("flow: vertex out of range");
        if (singular[x]) throw ValidationError("flow: vertex " + std::to_string(x) + " is singular");
        for (int y : mesh.vertex_neighbors(x))
            if (singular[y])
                throw ValidationError("flow: the 1-ring of vertex " + std::to_string(x) + " meets the singular set");
    }
    if (cfg.t_values.empty()) throw ValidationError("flow: no times requested");
    for (double t : cfg.t_values)
        if (!(t >= setup.kernel->t_min()))
            throw TruncationError("flow: t = " + std::to_string(t) + " below certified t_min", setup.kernel->t_min());
}

// ---------------------------------------------------------------------------

ContinuityOperator::ContinuityOperator(const FlowSetup& setup, int x, double t) : setup_(&setup), x_(x), t_(t) {
    const KernelSlice slice = kernel_slice(*setup.kernel, x, t);
    const double res = slice.resolution;
    if (slice.values.minCoeff() < -res)
        throw EllipticityError("flow: heat kernel slice at vertex " + std::to_string(x) + " is negative at t = " +
                               std::to_string(t));
    if (slice.values[x] <= res) throw EllipticityError("flow: heat kernel slice not resolved at t = " + std::to_string(t));
    // Values inside the rounding band carry no sign information; they are floored there.
    const Eigen::VectorXd rho = slice.values.cwiseMax(res);
    const auto& tris = setup.background->triangles;
    weights_.resize(static_cast<Eigen::Index>(tris.size()));
    for (std::size_t k = 0; k < tris.size(); ++k)
        weights_[k] = (rho[tris[k][0]] + rho[tris[k][1]] + rho[tris[k][2]]) / 3.0;
    kappa_ = weights_.minCoeff();
    K_ = stiffness_matrix_real(*setup.background, setup.coefficient, weights_);

    pin_ = x;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(K_.nonZeros());
    for (int k = 0; k < K_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K_, k); it; ++it)
            if (it.row() != pin_ && it.col() != pin_) trip.emplace_back(it.row(), it.col(), it.value());
    trip.emplace_back(pin_, pin_, K_.coeff(pin_, pin_));
    SparseMatrix Kp(K_.rows(), K_.cols());
    Kp.setFromTriplets(trip.begin(), trip.end());
    solver_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(Kp);
    if (solver_->info() != Eigen::Success) throw NonConvergence("flow: pinned factorization failed", {});
}

FlowSolution ContinuityOperator::solve(const Eigen::Vector2d& v) const {
    const auto& w = setup_->rough_measure;
    const Eigen::Index n = w.size();
    FlowSolution s;
    s.x = x_;
    s.v = v;
    s.t = t_;
    s.phi = Eigen::VectorXd::Zero(n);
    s.eta = Eigen::VectorXd::Zero(n);
    if (v.squaredNorm() == 0.0) return s;

    Eigen::VectorXd eta = kernel_x_derivative(*setup_->kernel, x_, v, t_);
    const double mean = w.dot(eta) / w.sum();
    const double scale = w.dot(eta.cwiseAbs()) / w.sum();
    // Rounding floor: the derivative of a kernel of size 1/|M| through the same stencil.
    double stencil = 0.0;
    for (const auto& [j, c] : setup_->kernel->frames().derivative_weights(x_, v)) stencil += std::abs(c);
    const double floor = 1e-12 * stencil / w.sum();
    if (std::abs(mean) > 1e-8 * scale + floor)
        throw CompatibilityError("flow: kernel derivative is not mean zero (relative " +
                                 std::to_string(std::abs(mean) / scale) + ")");
    eta.array() -= mean;
    const Eigen::VectorXd load = w.cwiseProduct(eta);

    Eigen::VectorXd b = load;
    b[pin_] = 0.0;
    Eigen::VectorXd phi = solver_->solve(b);
    phi = remean(phi, w);
    const double residual = (K_ * phi - load).norm() / load.norm();
    if (!(residual <= 1e-9))
        throw NonConvergence("flow: continuity residual " + std::to_string(residual) + " at vertex " +
                                 std::to_string(x_),
                             {residual});
    s.phi = std::move(phi);
    s.eta = std::move(eta);
    s.relative_residual = residual;
    return s;
}

FlowSolution solve_continuity(const FlowSetup& setup, int x, const Eigen::Vector2d& v, double t) {
    if (x < 0 || x >= setup.mesh->num_vertices()) throw ValidationError("flow: vertex out of range");
    return ContinuityOperator(setup, x, t).solve(v);
}

MetricSample assemble_metric(const FlowSetup& setup, const ContinuityOperator& op, const FlowSolution& e1,
                             const FlowSolution& e2) {
    if (e1.x != e2.x || e1.t != e2.t) throw ValidationError("assemble_metric: solutions from different problems");
    const auto& w = setup.rough_measure;
    const std::array<const FlowSolution*, 2> sol{&e1, &e2};
    Eigen::Matrix2d P, I;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            P(i, j) = w.cwiseProduct(sol[i]->eta).dot(sol[j]->phi);
            I(i, j) = sol[i]->phi.dot(op.stiffness() * sol[j]->phi);
        }
    MetricSample m;
    m.x = e1.x;
    m.t = e1.t;
    const double scale = std::max(std::abs(P(0, 0)), std::abs(P(1, 1)));
    m.asymmetry = scale > 0.0 ? std::abs(P(0, 1) - P(1, 0)) / scale : 0.0;
    if (m.asymmetry > 1e-8)
        throw ConsistencyError("assemble_metric: asymmetric polarization at vertex " + std::to_string(m.x) + " (" +
                               std::to_string(m.asymmetry) + ")");
    m.pairing = 0.5 * (P + P.transpose());
    m.integral = 0.5 * (I + I.transpose());
    m.form_gap = scale > 0.0 ? (m.pairing - m.integral).cwiseAbs().maxCoeff() / scale : 0.0;
    m.positive_definite = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m.pairing).eigenvalues()[0] > 0.0;
    return m;
}

MetricSample evolved_metric_at(const FlowSetup& setup, int x, double t) {
    const ContinuityOperator op(setup, x, t);
    const FlowSolution e1 = op.solve(Eigen::Vector2d::UnitX());
    const FlowSolution e2 = op.solve(Eigen::Vector2d::UnitY());
    return assemble_metric(setup, op, e1, e2);
}

EvolvedMetric compute_flow(const FlowSetup& setup, const FlowConfig& cfg) {
    FlowConfig c = cfg;
    if (c.nonsingular_set.empty()) c.nonsingular_set = default_nonsingular_set(*setup.mesh);
    validate_flow_config(setup, c);
    EvolvedMetric flow;
    flow.times = c.t_values;
    flow.vertices = c.nonsingular_set;
    flow.samples.assign(flow.times.size(), std::vector<MetricSample>(flow.vertices.size()));
    const std::size_t nv = flow.vertices.size();
    parallel_for(flow.times.size() * nv, c.threads, [&](std::size_t k) {
        const std::size_t ti = k / nv, i = k % nv;
        flow.samples[ti][i] = evolved_metric_at(setup, flow.vertices[i], flow.times[ti]);
    });
    for (const auto& row : flow.samples)
        for (const auto& m : row) {
            flow.max_form_gap = std::max(flow.max_form_gap, m.form_gap);
            flow.max_asymmetry = std::max(flow.max_asymmetry, m.asymmetry);
            flow.all_positive_definite = flow.all_positive_definite && m.positive_definite;
        }
    return flow;
}

// ---------------------------------------------------------------------------

namespace {

TangencyResult fit_tangency(TangencyResult r, double threshold) {
    const int m = static_cast<int>(r.times.size());
    if (m < 3) throw ValidationError("ricci_tangency: need at least three times");
    Eigen::MatrixXd A(m, 3);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = r.times[i];
        A(i, 2) = r.times[i] * r.times[i];
        y[i] = r.values[i];
    }
    const Eigen::Vector3d c = A.colPivHouseholderQr().solve(y);
    r.intercept = c[0];
    r.slope = c[1];
    const double scale = y.cwiseAbs().maxCoeff();
    r.fit_residual = scale > 0.0 ? (A * c - y).norm() / std::sqrt(double(m)) / scale : 0.0;
    r.resolved = r.fit_residual <= threshold;
    return r;
}

} // namespace

TangencyResult ricci_tangency(const FlowSetup& setup, int x, const Eigen::Vector2d& v,
                              const std::vector<double>& t_list, double residual_threshold) {
    FlowConfig cfg{t_list, {x}, 1};
    validate_flow_config(setup, cfg);
    TangencyResult r;
    r.x = x;
    r.v = v;
    r.times = t_list;
    for (double t : t_list) {
        const MetricSample m = evolved_metric_at(setup, x, t);
        r.values.push_back(v.dot(m.pairing * v));
    }
    return fit_tangency(std::move(r), residual_threshold);
}

TangencyResult ricci_tangency(const EvolvedMetric& flow, std::size_t i, const Eigen::Vector2d& v,
                              double residual_threshold) {
    if (i >= flow.vertices.size()) throw ValidationError("ricci_tangency: vertex index out of range");
    TangencyResult r;
    r.x = flow.vertices[i];
    r.v = v;
    r.times = flow.times;
    for (std::size_t ti = 0; ti < flow.times.size(); ++ti) r.values.push_back(v.dot(flow.samples[ti][i].pairing * v));
    return fit_tangency(std::move(r), residual_threshold);
}

ContinuityTable continuity_modulus(const FlowSetup& setup, const EvolvedMetric& flow, std::size_t ti,
                                   const std::vector<int>& excluded) {
    if (ti >= flow.times.size()) throw ValidationError("continuity_modulus: time index out of range");
    const auto& mesh = *setup.mesh;
    std::vector<int> index(mesh.num_vertices(), -1);
    for (std::size_t i = 0; i < flow.vertices.size(); ++i) index[flow.vertices[i]] = static_cast<int>(i);
    for (int v : excluded) index[v] = -1;
    const auto& frames = setup.kernel->frames();
    ContinuityTable table;
    table.t = flow.times[ti];
    for (const auto& e : mesh.edges()) {
        const int a = e[0], b = e[1];
        if (index[a] < 0 || index[b] < 0) continue;
        int tri = mesh.triangle_with_edge(a, b);
        if (tri < 0) tri = mesh.triangle_with_edge(b, a);
        const auto& vt = mesh.triangle(tri);
        const auto& g = setup.background->geometry[tri];
        int ia = 0, ib = 0;
        for (int k = 0; k < 3; ++k) {
            if (vt[k] == a) ia = k;
            if (vt[k] == b) ib = k;
        }
        const Eigen::Matrix2d& Ga = flow.samples[ti][index[a]].pairing;
        const Eigen::Matrix2d& Gb = flow.samples[ti][index[b]].pairing;
        const Eigen::Matrix2d T = frames.transport(a, b);
        ContinuityRow row;
        row.v0 = a;
        row.v1 = b;
        row.edge_length = (g.corners.col(ia) - g.corners.col(ib)).norm();
        row.frobenius_diff = (Ga - T * Gb * T.transpose()).norm();
        row.trace_diff = std::abs(Ga.trace() - Gb.trace());
        table.max_diff = std::max(table.max_diff, row.frobenius_diff);
        table.max_ratio = std::max(table.max_ratio, row.frobenius_diff / row.edge_length);
        table.rows.push_back(row);
    }
    return table;
}

} // namespace geoflow
