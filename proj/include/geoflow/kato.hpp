#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/fem.hpp"
#include "geoflow/functional_calculus.hpp"
#include "geoflow/random.hpp"
#include "geoflow/vertex_frames.hpp"

namespace geoflow {

/// The first `eigen_count` nonconstant Laplacian eigenfunctions followed by
/// `random_count` seeded random vectors, all mean-zero (columns).
Eigen::MatrixXd kato_probes(const Assembly& assembly, int eigen_count, int random_count, CounterRng rng);

struct KatoRatio {
    double c_low = 0.0;
    double c_high = 0.0;
    int skipped = 0;  ///< constant (zero-gradient) probes
};

/// min and max over probes of ||sqrt(L) u|| / ||grad u||.
KatoRatio kato_ratio(const SqrtOperator& root, const Eigen::MatrixXcd& probes);
KatoRatio kato_ratio(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                     const std::optional<Eigen::VectorXcd>& b, const Eigen::MatrixXcd& probes,
                     const QuadratureOptions& opt = {});

struct LipschitzRow {
    double magnitude;
    double ratio;  ///< max over probes of ||(sqrt L - sqrt L_m) u|| / ||grad u||
};

struct LipschitzSweep {
    std::vector<LipschitzRow> rows;
    double slope = 0.0;  ///< least-squares log-log slope over the positive magnitudes
};

/// Perturbs B by m * direction (and b by m * b_direction when given) for each magnitude m.
/// Directions are normalized to unit sup norm; m must stay below the ellipticity margins.
LipschitzSweep lipschitz_sweep(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                               const std::optional<Eigen::VectorXcd>& b, const CoefficientField& direction,
                               const std::optional<Eigen::VectorXcd>& b_direction,
                               const std::vector<double>& magnitudes, const Eigen::MatrixXcd& probes,
                               const QuadratureOptions& opt = {});

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct CoercivityConstants {
    double C1 = 0.0;  ///< ||u|| <= C1 ||Pi u||
    double C2 = 0.0;  ///< ||grad u|| + ||u|| <= C2 ||Pi u||
    int probes = 0;
};

/// Constants over probes (vertex part, covector part) lying in the range of Pi. The
/// covariant derivative of the covector part is measured through its potential.
CoercivityConstants coercivity_check(const Assembly& assembly, const VertexFrames& frames,
                                     const Eigen::MatrixXd& vertex_parts, const Eigen::MatrixXd& covector_parts);

/// Default probe basis: (phi_k, 0) and (0, grad phi_k / sqrt(lambda_k)) for k = 1..modes.
CoercivityConstants coercivity_check(const TriangleMesh& mesh, std::shared_ptr<const Assembly> assembly,
                                     int modes);

} // namespace geoflow
