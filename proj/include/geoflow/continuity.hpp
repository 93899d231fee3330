#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"
#include "geoflow/gm_flow.hpp"
#include "geoflow/random.hpp"

namespace geoflow {

/// One-parameter family A_x + s P, eta_x + s d of real symmetric problems through x.
struct PerturbationFamily {
    std::shared_ptr<const Assembly> assembly;
    std::vector<Eigen::Matrix2d> base;       ///< A_x
    std::vector<Eigen::Matrix2d> direction;  ///< P, sup norm 1 (or identically zero)
    Eigen::VectorXd data;                    ///< eta_x, mean zero
    Eigen::VectorXd data_direction;          ///< d, mean zero (may be zero)
    double margin = 0.0;                     ///< zeta < kappa_x

    /// Smallest eigenvalue of A_x over the triangles.
    double kappa() const;
};

/// Throws ValidationError on asymmetric tensors, a non-normalized direction, data that is
/// not mean zero, or zeta >= kappa_x.
void validate_family(const PerturbationFamily& f);

/// Seeded family: A_x with eigenvalues in [kappa, Lambda], a random symmetric direction,
/// random mean-zero data (unit norm) and data direction (unit norm).
PerturbationFamily random_family(std::shared_ptr<const Assembly> assembly, double kappa, double Lambda, double margin,
                                 CounterRng rng);

/// Dense sqrt(L_A) for real symmetric A, through the M-orthonormal eigenbasis.
Eigen::MatrixXd self_adjoint_sqrt(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A);

/// ||grad u|| for each column.
Eigen::VectorXd gradient_norms(const Assembly& assembly, const Eigen::MatrixXd& u);

struct SqrtDifferenceRow {
    double magnitude = 0.0;
    double ratio = 0.0;  ///< max over probes of ||(sqrt L_x - sqrt L_y) u|| / ||grad u||
};

struct SqrtDifferenceSweep {
    std::vector<SqrtDifferenceRow> rows;
    double slope = 0.0;
};

SqrtDifferenceSweep sqrt_difference_sweep(const PerturbationFamily& f, const std::vector<double>& magnitudes,
                                          const Eigen::MatrixXd& probes);

struct SolutionDifferenceRow {
    double magnitude = 0.0;
    double lhs_norm = 0.0;         ///< ||u_x - u_y||
    double rhs_bound = 0.0;        ///< s ||eta_x|| / (k (k - zeta) l1) + ||eta_x - eta_y|| / ((k - zeta) l1)
    double ratio = 0.0;
    double data_only_bound = 0.0;  ///< ||eta_x - eta_y|| / lambda_1(L_x)
};

struct SolutionDifferenceSweep {
    std::vector<SolutionDifferenceRow> rows;
    double kappa_x = 0.0;
    double lambda1 = 0.0;    ///< first nonzero eigenvalue of the Laplacian
    double lambda1_x = 0.0;  ///< first nonzero eigenvalue of L_x
    double norm_u_x = 0.0;
    double max_ratio = 0.0;
    bool monotone = false;   ///< lhs strictly decreasing as the magnitude decreases
    double smallest_relative = 0.0;  ///< lhs at the smallest positive magnitude over ||u_x||
};

SolutionDifferenceSweep solution_difference_sweep(const PerturbationFamily& f, const std::vector<double>& magnitudes);

/// Flow coefficients at two adjacent vertices: A_x = rho_t(x, .) I, A_y = rho_t(y, .) I, with
/// data eta_{t,x,v} and eta_{t,y,v'} (v' the direction transported into the frame of y).
struct KernelInstance {
    int x = 0;
    int y = 0;
    double t = 0.0;
    double lhs = 0.0;           ///< ||phi_x - phi_y||
    double coefficient_gap = 0.0;  ///< ||A_x - A_y||_inf
    double eta_norm = 0.0;
    double eta_gap = 0.0;
    double constant = 0.0;      ///< lhs / (coefficient_gap ||eta_x|| + eta_gap)
    double explicit_bound = 0.0;
    double ratio = 0.0;         ///< lhs / explicit_bound
};

/// Requires the flow setup to use the same metric for kernel and background.
KernelInstance heat_kernel_instance(const FlowSetup& setup, int x, int y, double t, const Eigen::Vector2d& v);

/// The same pair as a family: A_x + s P with P = (A_y - A_x) / gap, eta_x + s (eta_y - eta_x) / gap,
/// where gap = ||A_y - A_x||_inf. The problem at y sits at s = gap, which is the margin when
/// gap < 0.9 kappa_x (otherwise the margin is 0.9 kappa_x and y is out of reach).
PerturbationFamily heat_kernel_family(const FlowSetup& setup, int x, int y, double t, const Eigen::Vector2d& v);

} // namespace geoflow
