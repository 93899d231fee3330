#include "geoflow/coefficients.hpp"

#include <cmath>
#include <numbers>

#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

Eigen::Matrix2d random_rotation(CounterRng& rng) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Eigen::Matrix2d R;
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return R;
}

template <int N>
Eigen::Matrix<std::complex<double>, N, N> random_unitary(CounterRng& rng) {
    Eigen::Matrix<std::complex<double>, N, N> G;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) G(i, j) = {rng.normal(), rng.normal()};
    Eigen::HouseholderQR<Eigen::Matrix<std::complex<double>, N, N>> qr(G);
    return qr.householderQ();
}

/// Hermitian part with spectrum in [lo, hi] plus skew part of norm `skew`.
template <int N>
Eigen::Matrix<std::complex<double>, N, N> random_accretive(CounterRng& rng, double lo, double hi, double skew) {
    using Mat = Eigen::Matrix<std::complex<double>, N, N>;
    const Mat Q = random_unitary<N>(rng);
    Eigen::Matrix<double, N, 1> ev;
    for (int i = 0; i < N; ++i) ev[i] = rng.uniform(lo, hi);
    const Mat H = Q * ev.template cast<std::complex<double>>().asDiagonal() * Q.adjoint();
    const Mat P = random_unitary<N>(rng);
    Eigen::Matrix<double, N, 1> sv;
    for (int i = 0; i < N; ++i) sv[i] = rng.uniform(-1.0, 1.0);
    sv *= skew / sv.cwiseAbs().maxCoeff();
    const Mat S = std::complex<double>(0.0, 1.0) * (P * sv.template cast<std::complex<double>>().asDiagonal() * P.adjoint());
    return H + S;
}

void check_bounds(double kappa, double Lambda) {
    if (!(kappa > 0.0) || !(Lambda >= kappa)) throw ValidationError("coefficients: need 0 < kappa <= Lambda");
}

} // namespace

CoefficientField random_symmetric_field(int num_triangles, double kappa, double Lambda, CounterRng rng) {
    check_bounds(kappa, Lambda);
    std::vector<Eigen::Matrix2d> tensors(num_triangles);
    for (auto& T : tensors) {
        const Eigen::Matrix2d R = random_rotation(rng);
        const Eigen::Vector2d ev(rng.uniform(kappa, Lambda), rng.uniform(kappa, Lambda));
        T = R * ev.asDiagonal() * R.transpose();
        T = 0.5 * (T + T.transpose()).eval();
    }
    return CoefficientField::from_real(tensors, kappa, Lambda);
}

CoefficientField random_complex_field(int num_triangles, double kappa, double Lambda, CounterRng rng) {
    check_bounds(kappa, Lambda);
    // Hermitian part in [kappa, hi] and skew part s with hi + s <= Lambda.
    const double hi = kappa + 0.6 * (Lambda - kappa);
    const double skew = 0.9 * (Lambda - hi);
    std::vector<Eigen::Matrix2cd> tensors(num_triangles);
    for (auto& T : tensors) T = random_accretive<2>(rng, kappa, hi, skew);
    return CoefficientField::from_complex(tensors, kappa, Lambda);
}

CoefficientField ambient_complex_field(const TriangleMesh& mesh, double kappa, double Lambda, std::uint64_t seed) {
    check_bounds(kappa, Lambda);
    CounterRng rng(seed, 0x616d6269656e74ULL);
    constexpr int J = 4;
    const double lo = kappa * 1.1, hi = kappa + 0.6 * (Lambda - kappa);
    const double skew = 0.9 * (Lambda - hi);
    std::array<std::array<Eigen::Matrix3cd, J>, 2> C;
    std::array<Eigen::Vector3d, J> dirs;
    for (auto& side : C)
        for (auto& M : side) M = random_accretive<3>(rng, lo, hi, skew);
    for (auto& d : dirs) d = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Eigen::Vector3d cut = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();

    std::vector<Eigen::Matrix2cd> tensors(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Eigen::Vector3d c = ((mesh.vertex(tri[0]) + mesh.vertex(tri[1]) + mesh.vertex(tri[2])) / 3.0).normalized();
        const int side = c.dot(cut) >= 0.0 ? 0 : 1;
        Eigen::Matrix3cd B3 = Eigen::Matrix3cd::Zero();
        double wsum = 0.0;
        for (int j = 0; j < J; ++j) {
            const double w = std::pow(1.0 + 0.9 * dirs[j].dot(c), 2);
            B3 += w * C[side][j];
            wsum += w;
        }
        B3 /= wsum;
        const Eigen::Matrix<std::complex<double>, 3, 2> E = mesh.local_frame(t).frame.cast<std::complex<double>>();
        tensors[t] = E.transpose() * B3 * E;
    }
    return CoefficientField::from_complex(tensors, kappa, Lambda);
}

Eigen::VectorXcd ambient_multiplier(const TriangleMesh& mesh, double kappa2, std::uint64_t seed) {
    if (!(kappa2 > 0.0) || kappa2 >= 1.0) throw ValidationError("multiplier: kappa2 must lie in (0, 1)");
    CounterRng rng(seed, 0x6d756c74ULL);
    const Eigen::Vector3d a = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Eigen::Vector3d c = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const double amp = 0.9 * (1.0 - kappa2);
    Eigen::VectorXcd b(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const Eigen::Vector3d p = mesh.vertex(v).normalized();
        b[v] = {1.0 + amp * std::sin(2.0 * a.dot(p)), 0.5 * std::cos(3.0 * c.dot(p))};
    }
    return b;
}

double sector_angle(const CoefficientField& A) {
    double omega = 0.0;
    for (const auto& B : A.tensors) {
        const Eigen::Matrix2cd H = 0.5 * (B + B.adjoint());
        const Eigen::Matrix2cd S = 0.5 * (B - B.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(H);
        Eigen::JacobiSVD<Eigen::Matrix2cd> svd(S);
        omega = std::max(omega, std::atan(svd.singularValues()[0] / es.eigenvalues()[0]));
    }
    return omega;
}

} // namespace geoflow
