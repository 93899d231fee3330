#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"
#include "geoflow/heat_kernel.hpp"
#include "geoflow/metric.hpp"

namespace geoflow {

/// Shared, immutable data for the evolved-metric computation: the background metric g
/// (frames, stiffness geometry), the rough metric g~ (heat kernel, measure) and the
/// comparison coefficients between them.
struct FlowSetup {
    std::shared_ptr<const TriangleMesh> mesh;
    std::shared_ptr<const MetricPair> pair;
    std::shared_ptr<const Assembly> background;  ///< lumped assembly of g
    std::shared_ptr<const HeatKernel> kernel;    ///< heat kernel of g~, frames of g
    std::vector<Eigen::Matrix2d> coefficient;    ///< theta * H^{-1} per triangle
    Eigen::VectorXd rough_measure;               ///< vertex weights of mu_g~ (lumped)
};

/// `modes` < 0 keeps the full spectrum of the kernel.
FlowSetup make_flow_setup(const TriangleMesh& mesh, const RoughMetric& background, const RoughMetric& rough,
                          int modes = -1);

struct FlowConfig {
    std::vector<double> t_values;
    /// Vertex subset N; empty means every vertex not adjacent to a declared singular one.
    std::vector<int> nonsingular_set;
    int threads = 1;
};

/// Default N: vertices whose closed 1-ring avoids the declared singular vertices and
/// whose distance (in edges) from them is at least `exclusion_rings`.
std::vector<int> default_nonsingular_set(const TriangleMesh& mesh, int exclusion_rings = 1);

/// Checks N (nonempty, no singular vertex in any closed 1-ring) and the time range.
void validate_flow_config(const FlowSetup& setup, const FlowConfig& cfg);

struct FlowSolution {
    int x = 0;
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    double t = 0.0;
    Eigen::VectorXd phi;
    Eigen::VectorXd eta;
    double relative_residual = 0.0;
};

/// Weighted operator of the continuity equation at (x, t): coefficient rho_t(x, .) theta H^{-1}
/// per triangle, factored once and reused for every direction v.
class ContinuityOperator {
public:
    ContinuityOperator(const FlowSetup& setup, int x, double t);

    const SparseMatrix& stiffness() const { return K_; }
    /// Smallest kernel value used (after clamping to the rounding band).
    double kappa() const { return kappa_; }
    /// Per-triangle kernel weights entering the coefficient.
    const Eigen::VectorXd& triangle_weights() const { return weights_; }

    FlowSolution solve(const Eigen::Vector2d& v) const;

private:
    const FlowSetup* setup_;
    int x_;
    double t_;
    SparseMatrix K_;
    Eigen::VectorXd weights_;
    double kappa_ = 0.0;
    int pin_ = 0;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
};

FlowSolution solve_continuity(const FlowSetup& setup, int x, const Eigen::Vector2d& v, double t);

struct MetricSample {
    int x = 0;
    double t = 0.0;
    Eigen::Matrix2d pairing = Eigen::Matrix2d::Zero();   ///< <theta eta_i, phi_j>, symmetrized
    Eigen::Matrix2d integral = Eigen::Matrix2d::Zero();  ///< int rho B theta grad phi_i . grad phi_j
    double asymmetry = 0.0;  ///< |g12 - g21| of the raw pairing, relative to scale
    double form_gap = 0.0;   ///< max entry gap between the two forms, relative to scale
    bool positive_definite = false;
};

/// Polarized tensor from the solutions for the two frame vectors at x.
MetricSample assemble_metric(const FlowSetup& setup, const ContinuityOperator& op, const FlowSolution& e1,
                             const FlowSolution& e2);
MetricSample evolved_metric_at(const FlowSetup& setup, int x, double t);

struct EvolvedMetric {
    std::vector<double> times;
    std::vector<int> vertices;
    std::vector<std::vector<MetricSample>> samples;  ///< [time][vertex index]
    double max_form_gap = 0.0;
    double max_asymmetry = 0.0;
    bool all_positive_definite = true;
};

EvolvedMetric compute_flow(const FlowSetup& setup, const FlowConfig& cfg);

struct TangencyResult {
    int x = 0;
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    std::vector<double> times;
    std::vector<double> values;  ///< g_t(x)(v, v)
    double slope = 0.0;          ///< d/dt at t = 0 of the quadratic least-squares fit
    double intercept = 0.0;
    double fit_residual = 0.0;   ///< RMS misfit relative to max |value|
    bool resolved = false;
};

/// Slope of t -> g_t(x)(v, v) at t = 0 from a quadratic fit; compare with -2 Ric(v, v).
TangencyResult ricci_tangency(const FlowSetup& setup, int x, const Eigen::Vector2d& v,
                              const std::vector<double>& t_list, double residual_threshold = 1e-2);
/// Same fit from tensors already computed for vertex index `i` of the flow.
TangencyResult ricci_tangency(const EvolvedMetric& flow, std::size_t i, const Eigen::Vector2d& v,
                              double residual_threshold = 1e-2);

struct ContinuityRow {
    int v0 = 0;
    int v1 = 0;
    double edge_length = 0.0;
    double frobenius_diff = 0.0;  ///< ||g_t(x) - T g_t(y) T^T||_F with T the frame transport
    double trace_diff = 0.0;      ///< frame-free scalar variant |tr g_t(x) - tr g_t(y)|
};

struct ContinuityTable {
    double t = 0.0;
    std::vector<ContinuityRow> rows;
    double max_diff = 0.0;
    double max_ratio = 0.0;  ///< max frobenius_diff / edge_length
};

/// Edge differences of the flow at time index `ti`, over edges with both ends in the flow's
/// vertex set. Vertices listed in `excluded` are skipped.
ContinuityTable continuity_modulus(const FlowSetup& setup, const EvolvedMetric& flow, std::size_t ti,
                                   const std::vector<int>& excluded = {});

/// Vertices within `rings` edges of the declared singular vertices.
std::vector<int> singular_neighbourhood(const TriangleMesh& mesh, int rings);

} // namespace geoflow
