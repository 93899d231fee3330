#pragma once

#include <cstdint>

#include "geoflow/fem.hpp"
#include "geoflow/random.hpp"

namespace geoflow {

/// Independent random real symmetric tensor per triangle with eigenvalues in [kappa, Lambda].
CoefficientField random_symmetric_field(int num_triangles, double kappa, double Lambda, CounterRng rng);

/// Random complex tensor per triangle: Hermitian part with eigenvalues in [kappa, ...]
/// plus a skew-Hermitian part, with operator norm at most Lambda.
CoefficientField random_complex_field(int num_triangles, double kappa, double Lambda, CounterRng rng);

/// Complex field defined on the ambient space and restricted to every triangle plane:
/// smooth in each half-space, discontinuous across a random plane through the origin.
/// Evaluated at centroids, so refinements of the same sphere see the same function.
/// Requires the metric induced by the embedding.
CoefficientField ambient_complex_field(const TriangleMesh& mesh, double kappa, double Lambda, std::uint64_t seed);

/// Smooth complex vertex multiplier with real part >= kappa2.
Eigen::VectorXcd ambient_multiplier(const TriangleMesh& mesh, double kappa2, std::uint64_t seed);

/// Angle of the sector containing the numerical range of the field.
double sector_angle(const CoefficientField& A);

} // namespace geoflow
