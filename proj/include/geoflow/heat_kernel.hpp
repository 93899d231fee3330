#pragma once

#include <memory>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"
#include "geoflow/spectral.hpp"
#include "geoflow/vertex_frames.hpp"

namespace geoflow {

/// Heat kernel rho_t(x, y) = sum_k exp(-lambda_k t) phi_k(x) phi_k(y) of a Laplacian
/// pencil (K, M), with derivatives in x taken in the given vertex frames.
class HeatKernel {
public:
    /// `modes` < 0 keeps the full spectrum.
    HeatKernel(const SparseMatrix& stiffness, const SparseMatrix& mass, std::shared_ptr<const VertexFrames> frames,
               int modes = -1);

    const SpectralDecomposition& spec() const { return spec_; }
    int K() const { return spec_.count(); }
    double t_min() const { return t_min_; }
    const Eigen::VectorXd& measure() const { return measure_; }
    double total_measure() const { return measure_.sum(); }
    const VertexFrames& frames() const { return *frames_; }
    int num_vertices() const { return static_cast<int>(measure_.size()); }

    /// Certified bound on |truncated - full| kernel entries at time t.
    double tail_bound(double t) const;
    /// Bound on the rounding error of computed kernel values at time t: entries whose
    /// magnitude is below this are not resolved in double precision.
    double resolution(double t) const;
    /// max_x rho_t(x, x) and min_x rho_t(x, x).
    double max_diagonal(double t) const;
    double min_diagonal(double t) const;

    /// True when the stiffness has nonpositive off-diagonal entries and the mass is
    /// diagonal; then exp(-t M^{-1} K) is entrywise positive for every t > 0.
    bool positivity_certificate() const { return m_matrix_; }

private:
    SpectralDecomposition spec_;
    std::shared_ptr<const VertexFrames> frames_;
    Eigen::VectorXd measure_;
    Eigen::VectorXd tail_diag_;  ///< [M^{-1}]_xx - sum_k phi_k(x)^2
    double t_min_ = 0.0;
    bool m_matrix_ = false;
};

/// Kernel on the mesh for `kernel_metric`, with frames from `frame_metric` (lumped mass).
std::shared_ptr<const HeatKernel> build_heat_kernel(const TriangleMesh& mesh, const RoughMetric& kernel_metric,
                                                    const RoughMetric& frame_metric, int modes = -1,
                                                    MassKind mass = MassKind::lumped);

struct KernelSlice {
    int x;
    double t;
    Eigen::VectorXd values;
    double resolution;  ///< rounding band of the values
};

KernelSlice kernel_slice(const HeatKernel& hk, int x, double t);

/// eta_{t,x,v}(y) = sum_k exp(-lambda_k t) (grad phi_k(x) . v) phi_k(y).
Eigen::VectorXd kernel_x_derivative(const HeatKernel& hk, int x, const Eigen::Vector2d& v, double t);

} // namespace geoflow
