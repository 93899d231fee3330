#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "geoflow/mesh.hpp"
#include "geoflow/metric.hpp"

namespace geoflow {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseMatrixC = Eigen::SparseMatrix<std::complex<double>>;

enum class MassKind { consistent, lumped };

/// Intrinsic P1 data of one triangle, written in a metric-orthonormal frame.
struct TriangleGeometry {
    Eigen::Matrix<double, 2, 3> corners;
    Eigen::Matrix<double, 2, 3> grad;  ///< gradients of the barycentric hat functions
    double area;
};

std::vector<TriangleGeometry> triangle_geometry(const TriangleMesh& mesh, const RoughMetric& metric);

/// Vertex form (L^2 mass) and per-triangle covector form (block diagonal, area * I2).
struct DiscreteSpaces {
    MassKind mass_kind = MassKind::consistent;
    SparseMatrix mass;
    Eigen::VectorXd measure;           ///< M * 1, the vertex measure weights
    Eigen::VectorXd covector_weights;  ///< length 2*nT, area repeated per component
    double total_measure = 0.0;

    int num_vertices() const { return static_cast<int>(measure.size()); }
    int num_triangles() const { return static_cast<int>(covector_weights.size() / 2); }

    template <class V>
    auto inner(const V& u, const V& v) const { return v.dot(mass * u); }
    template <class V>
    double norm(const V& u) const { return std::sqrt(std::abs(inner(u, u))); }
    template <class V>
    auto covector_inner(const V& w, const V& z) const { return z.dot(covector_weights.cwiseProduct(w)); }
    template <class V>
    double covector_norm(const V& w) const { return std::sqrt(std::abs(covector_inner(w, w))); }

    template <class V>
    auto mean(const V& u) const { return measure.dot(u) / total_measure; }
    /// Component of u in the mean-zero set (orthogonal complement of the constants).
    template <class V>
    V mean_zero_part(const V& u) const {
        V r = u;
        r.array() -= mean(u);
        return r;
    }
};

/// Gradient (vertex values -> per-triangle covectors) and divergence = -(gradient)^*.
class GradDivPair {
public:
    GradDivPair(SparseMatrix gradient, const DiscreteSpaces& spaces);

    const SparseMatrix& gradient() const { return gradient_; }
    Eigen::VectorXd grad(const Eigen::VectorXd& u) const { return gradient_ * u; }
    Eigen::VectorXcd grad(const Eigen::VectorXcd& u) const { return gradient_.cast<std::complex<double>>() * u; }
    /// -M^{-1} D^T W w.
    Eigen::VectorXd divergence(const Eigen::VectorXd& w) const;
    Eigen::VectorXcd divergence(const Eigen::VectorXcd& w) const;
    /// M^{-1} x for a vertex load vector x.
    Eigen::VectorXd solve_mass(const Eigen::VectorXd& x) const;
    Eigen::VectorXcd solve_mass(const Eigen::VectorXcd& x) const;

private:
    SparseMatrix gradient_;
    Eigen::VectorXd weights_;
    std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> mass_solver_;
    Eigen::VectorXd lumped_;
    bool lumped_kind_;
};

struct Assembly {
    std::vector<TriangleGeometry> geometry;
    DiscreteSpaces spaces;
    GradDivPair pair;
    std::vector<std::array<int, 3>> triangles;
};

/// P1 discretization of the mesh under `metric`.
std::shared_ptr<const Assembly> assemble(const TriangleMesh& mesh, const RoughMetric& metric,
                                         MassKind mass = MassKind::consistent);

/// Mass matrix with per-triangle weights replacing the triangle areas.
SparseMatrix weighted_mass(const std::vector<std::array<int, 3>>& triangles, const std::vector<double>& weights,
                           int num_vertices, MassKind kind);

/// Per-triangle 2x2 coefficient tensor in the metric-orthonormal covector frame.
struct CoefficientField {
    std::vector<Eigen::Matrix2cd> tensors;
    bool real_symmetric = true;
    double kappa = 1.0;
    double Lambda = 1.0;

    int num_triangles() const { return static_cast<int>(tensors.size()); }
    Eigen::Matrix2d real_tensor(int t) const { return tensors[t].real(); }

    /// Checks the ellipticity and boundedness claims; throws EllipticityError.
    void validate() const;

    static CoefficientField identity(int num_triangles, double scale = 1.0);
    /// Real symmetric field; kappa/Lambda default to the measured bounds.
    static CoefficientField from_real(const std::vector<Eigen::Matrix2d>& tensors, std::optional<double> kappa = {},
                                      std::optional<double> Lambda = {});
    static CoefficientField from_complex(const std::vector<Eigen::Matrix2cd>& tensors,
                                         std::optional<double> kappa = {}, std::optional<double> Lambda = {});
};

/// Smallest Re<Bu,u>/|u|^2 and largest operator norm over all triangles.
double measured_kappa(const CoefficientField& A);
double measured_Lambda(const CoefficientField& A);

/// L u = b * (-div A grad u), realised as b * M^{-1} K_A u.
class EllipticOperator {
public:
    EllipticOperator(std::shared_ptr<const Assembly> assembly, CoefficientField A,
                     std::optional<Eigen::VectorXcd> b = std::nullopt);

    const Assembly& assembly() const { return *assembly_; }
    std::shared_ptr<const Assembly> assembly_ptr() const { return assembly_; }
    const DiscreteSpaces& spaces() const { return assembly_->spaces; }
    const GradDivPair& pair() const { return assembly_->pair; }
    const CoefficientField& coefficients() const { return A_; }
    const std::optional<Eigen::VectorXcd>& multiplier() const { return b_; }
    int dimension() const { return spaces().num_vertices(); }

    bool is_real() const { return A_.real_symmetric && !b_; }
    bool self_adjoint() const { return is_real(); }

    /// K_A = D^T W_A D. Real version requires a real symmetric field.
    const SparseMatrix& stiffness() const;
    const SparseMatrixC& stiffness_complex() const { return Kc_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
    Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const;
    /// J_A[u, v] = <A grad u, grad v>.
    std::complex<double> form(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) const;
    /// Dense n x n matrix of L (oracles, small meshes).
    Eigen::MatrixXcd dense() const;

private:
    std::shared_ptr<const Assembly> assembly_;
    CoefficientField A_;
    std::optional<Eigen::VectorXcd> b_;
    SparseMatrix K_;
    SparseMatrixC Kc_;
};

/// Validates A (and b), builds the operator, and checks the Garding bound on probes.
EllipticOperator make_operator(std::shared_ptr<const Assembly> assembly, const CoefficientField& A,
                               std::optional<Eigen::VectorXcd> b = std::nullopt);

/// Complex stiffness D^T W_A D for any field.
SparseMatrixC stiffness_matrix(const Assembly& assembly, const CoefficientField& A);
SparseMatrix stiffness_matrix_real(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A);
/// Stiffness for a scalar per-triangle weight times a tensor field (used by the flow).
SparseMatrix stiffness_matrix_real(const Assembly& assembly, const std::vector<Eigen::Matrix2d>& A,
                                   const Eigen::VectorXd& triangle_scale);

} // namespace geoflow
