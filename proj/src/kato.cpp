#include "geoflow/kato.hpp"

#include <cmath>
#include <iostream>

#include "geoflow/elliptic_solver.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/spectral.hpp"

namespace geoflow {

namespace {

SparseMatrix laplacian_stiffness(const Assembly& a) {
    return stiffness_matrix_real(a, std::vector<Eigen::Matrix2d>(a.triangles.size(), Eigen::Matrix2d::Identity()));
}

double hilbert_norm(const DiscreteSpaces& s, const Eigen::VectorXcd& u) { return s.norm(u); }

} // namespace

Eigen::MatrixXd kato_probes(const Assembly& assembly, int eigen_count, int random_count, CounterRng rng) {
    const int n = assembly.spaces.num_vertices();
    if (eigen_count < 0 || random_count < 0 || eigen_count + 1 > n)
        throw ValidationError("probes: counts out of range");
    Eigen::MatrixXd P(n, eigen_count + random_count);
    if (eigen_count > 0) {
        const auto spec = eigensolve_pencil(laplacian_stiffness(assembly), assembly.spaces.mass, eigen_count + 1);
        P.leftCols(eigen_count) = spec.vectors.rightCols(eigen_count);
    }
    for (int j = 0; j < random_count; ++j) {
        Eigen::VectorXd v = assembly.spaces.mean_zero_part(Eigen::VectorXd(rng.normal_vector(n)));
        P.col(eigen_count + j) = v / assembly.spaces.norm(v);
    }
    return P;
}

KatoRatio kato_ratio(const SqrtOperator& root, const Eigen::MatrixXcd& probes) {
    const auto& a = root.dirac().assembly();
    const Eigen::MatrixXcd S = root.apply(probes);
    KatoRatio out{std::numeric_limits<double>::infinity(), 0.0, 0};
    for (Eigen::Index j = 0; j < probes.cols(); ++j) {
        const double grad = a.spaces.covector_norm(Eigen::VectorXcd(a.pair.grad(Eigen::VectorXcd(probes.col(j)))));
        if (grad <= 1e-12 * a.spaces.norm(Eigen::VectorXcd(probes.col(j)))) {
            std::cerr << "warning: kato_ratio skips a constant probe\n";
            ++out.skipped;
            continue;
        }
        const double r = hilbert_norm(a.spaces, S.col(j)) / grad;
        out.c_low = std::min(out.c_low, r);
        out.c_high = std::max(out.c_high, r);
    }
    if (out.c_high == 0.0) throw ValidationError("kato_ratio: no nonconstant probes");
    return out;
}

KatoRatio kato_ratio(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                     const std::optional<Eigen::VectorXcd>& b, const Eigen::MatrixXcd& probes,
                     const QuadratureOptions& opt) {
    return kato_ratio(SqrtOperator(std::move(assembly), B, b, opt), probes);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("slope: size mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    if (m < 2) throw ValidationError("slope: need at least two positive points");
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

LipschitzSweep lipschitz_sweep(std::shared_ptr<const Assembly> assembly, const CoefficientField& B,
                               const std::optional<Eigen::VectorXcd>& b, const CoefficientField& direction,
                               const std::optional<Eigen::VectorXcd>& b_direction,
                               const std::vector<double>& magnitudes, const Eigen::MatrixXcd& probes,
                               const QuadratureOptions& opt) {
    const int nT = assembly->spaces.num_triangles();
    if (direction.num_triangles() != nT) throw ValidationError("lipschitz: direction does not match the mesh");
    const double dnorm = measured_Lambda(direction);
    if (!(dnorm > 0.0)) throw ValidationError("lipschitz: zero direction");
    std::optional<Eigen::VectorXcd> bdir;
    double kappa_b = std::numeric_limits<double>::infinity();
    if (b_direction) {
        const double bn = b_direction->cwiseAbs().maxCoeff();
        if (!(bn > 0.0)) throw ValidationError("lipschitz: zero multiplier direction");
        bdir = *b_direction / bn;
        kappa_b = b ? b->real().minCoeff() : 1.0;
    }
    const double margin = std::min(B.kappa, kappa_b);
    for (double m : magnitudes)
        if (!(m >= 0.0) || m >= margin)
            throw ValidationError("lipschitz: magnitude " + std::to_string(m) + " not below the ellipticity margin " +
                                  std::to_string(margin));

    const auto& spaces = assembly->spaces;
    const SqrtOperator base(assembly, B, b, opt);
    const Eigen::MatrixXcd S0 = base.apply(probes);
    std::vector<double> grads(probes.cols());
    for (Eigen::Index j = 0; j < probes.cols(); ++j)
        grads[j] = spaces.covector_norm(Eigen::VectorXcd(assembly->pair.grad(Eigen::VectorXcd(probes.col(j)))));

    LipschitzSweep out;
    std::vector<double> xs, ys;
    for (double m : magnitudes) {
        double ratio = 0.0;
        if (m > 0.0) {
            CoefficientField Bm = B;
            for (int t = 0; t < nT; ++t) Bm.tensors[t] += (m / dnorm) * direction.tensors[t];
            Bm.real_symmetric = B.real_symmetric && direction.real_symmetric;
            Bm.kappa = B.kappa - m;
            Bm.Lambda = B.Lambda + m;
            std::optional<Eigen::VectorXcd> bm = b;
            if (bdir) bm = (b ? *b : Eigen::VectorXcd::Ones(spaces.num_vertices())) + m * *bdir;
            const Eigen::MatrixXcd Sm = SqrtOperator(assembly, Bm, bm, opt).apply(probes);
            for (Eigen::Index j = 0; j < probes.cols(); ++j)
                if (grads[j] > 0.0)
                    ratio = std::max(ratio, spaces.norm(Eigen::VectorXcd(S0.col(j) - Sm.col(j))) / grads[j]);
            xs.push_back(m);
            ys.push_back(ratio);
        }
        out.rows.push_back({m, ratio});
    }
    if (xs.size() >= 2) out.slope = loglog_slope(xs, ys);
    return out;
}

CoercivityConstants coercivity_check(const Assembly& a, const VertexFrames& frames, const Eigen::MatrixXd& U,
                                     const Eigen::MatrixXd& W) {
    if (U.cols() != W.cols()) throw ValidationError("coercivity: probe parts do not match");
    const auto& s = a.spaces;
    const SparseMatrix K = laplacian_stiffness(a);
    CoercivityConstants out;
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
        const Eigen::VectorXd u = U.col(j), w = W.col(j);
        // Range of Pi: mean-zero vertex part and exact covector part w = grad p.
        const double un = s.norm(u), wn = s.covector_norm(w);
        if (un + wn == 0.0) continue;
        if (std::abs(s.mean(u)) * std::sqrt(s.total_measure) > 1e-10 * std::max(un, wn))
            throw ValidationError("coercivity: probe vertex part is not mean-zero");
        Eigen::VectorXd p = Eigen::VectorXd::Zero(u.size());
        if (wn > 0.0) {
            const Eigen::VectorXd load = a.pair.gradient().transpose() * s.covector_weights.cwiseProduct(w);
            p = pinned_direct_solve(K, load, s.measure, 0);
            const double residual = s.covector_norm(Eigen::VectorXd(w - a.pair.grad(p)));
            if (residual > 1e-10 * wn) throw ValidationError("coercivity: probe covector part is not a gradient");
        }
        const Eigen::VectorXd grad_u = a.pair.grad(u);
        const double div_w = s.norm(a.pair.divergence(w));
        const double pi_norm = std::sqrt(div_w * div_w + s.covector_norm(grad_u) * s.covector_norm(grad_u));
        const double norm = std::sqrt(un * un + wn * wn);
        const double grad_norm = std::sqrt(std::pow(s.covector_norm(grad_u), 2) + frames.hessian_norm_squared(p));
        out.C1 = std::max(out.C1, norm / pi_norm);
        out.C2 = std::max(out.C2, (grad_norm + norm) / pi_norm);
        ++out.probes;
    }
    return out;
}

CoercivityConstants coercivity_check(const TriangleMesh& mesh, std::shared_ptr<const Assembly> assembly, int modes) {
    const auto spec = eigensolve_pencil(laplacian_stiffness(*assembly), assembly->spaces.mass, modes + 1);
    const int n = assembly->spaces.num_vertices(), nT = assembly->spaces.num_triangles();
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, 2 * modes), W = Eigen::MatrixXd::Zero(2 * nT, 2 * modes);
    for (int k = 1; k <= modes; ++k) {
        U.col(k - 1) = spec.vectors.col(k);
        W.col(modes + k - 1) = assembly->pair.grad(Eigen::VectorXd(spec.vectors.col(k))) / std::sqrt(spec.values[k]);
    }
    const VertexFrames frames(mesh, *assembly);
    return coercivity_check(*assembly, frames, U, W);
}

} // namespace geoflow
