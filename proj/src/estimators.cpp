#include "factorkit/estimators.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/rng.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace factorkit {

namespace {

void check_rank_arg(const ScaledData& z, int r) {
    const int mindim = std::min(z.T(), z.N());
    if (r < 1 || r > mindim)
        throw ValidationError("factor count must be in 1.." + std::to_string(mindim) +
                              ", got " + std::to_string(r));
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), std::min(m.rows(), m.cols()));
}

void fix_signs(Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
    for (int j = 0; j < u.cols(); ++j) {
        int at = 0;
        u.col(j).cwiseAbs().maxCoeff(&at);
        if (u(at, j) < 0.0) {
            u.col(j) = -u.col(j);
            v.col(j) = -v.col(j);
        }
    }
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
    case Method::apc:
        return "apc";
    case Method::pc:
        return "pc";
    case Method::rpc:
        return "rpc";
    case Method::rpc_general:
        return "rpc_general";
    default:
        return "constrained";
    }
}

FactorFit apc(const ScaledData& z, int r, const SvdOptions& opts) {
    check_rank_arg(z, r);
    const PartialSvd s = top_k_svd(z.Z, r, opts);
    FactorFit fit;
    fit.F = std::sqrt(static_cast<double>(z.T())) * s.U;
    fit.Lambda = std::sqrt(static_cast<double>(z.N())) * s.V * s.d.asDiagonal();
    fit.d = s.d;
    fit.method = Method::apc;
    fit.effective_rank = positive_count(s.d);
    fit.converged = s.converged;
    fit.iterations = s.iterations;
    return fit;
}

FactorFit pc(const ScaledData& z, int r, const SvdOptions& opts) {
    check_rank_arg(z, r);
    const PartialSvd s = top_k_svd(z.Z, r, opts);
    const Eigen::VectorXd root = s.d.cwiseSqrt();
    FactorFit fit;
    fit.F = std::sqrt(static_cast<double>(z.T())) * s.U * root.asDiagonal();
    fit.Lambda = std::sqrt(static_cast<double>(z.N())) * s.V * root.asDiagonal();
    fit.d = s.d;
    fit.method = Method::pc;
    fit.effective_rank = positive_count(s.d);
    fit.converged = s.converged;
    fit.iterations = s.iterations;
    return fit;
}

FactorFit rpc_closed_form(const ScaledData& z, int r, double gamma, const SvdOptions& opts) {
    check_rank_arg(z, r);
    const PartialSvd s = top_k_svd(z.Z, r, opts);
    const Eigen::VectorXd dg = soft_threshold(s.d, gamma);
    const Eigen::VectorXd root = dg.cwiseSqrt();
    FactorFit fit;
    fit.F = std::sqrt(static_cast<double>(z.T())) * s.U * root.asDiagonal();
    fit.Lambda = std::sqrt(static_cast<double>(z.N())) * s.V * root.asDiagonal();
    fit.d = s.d;
    fit.gamma1 = fit.gamma2 = gamma;
    fit.method = Method::rpc;
    fit.effective_rank = positive_count(dg);
    fit.converged = s.converged;
    fit.iterations = s.iterations;
    return fit;
}

FactorFit rpc_general(const ScaledData& z, int r, double gamma1, double gamma2,
                      const SvdOptions& opts) {
    check_rank_arg(z, r);
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0))
        throw ValidationError("rpc_general needs gamma1 > 0 and gamma2 > 0");
    const PartialSvd s = top_k_svd(z.Z, r, opts);
    const Eigen::VectorXd dg = soft_threshold(s.d, std::sqrt(gamma1 * gamma2));
    const Eigen::VectorXd root = dg.cwiseSqrt();
    const double ratio = std::pow(gamma2 / gamma1, 0.25);
    FactorFit fit;
    fit.F = std::sqrt(static_cast<double>(z.T())) * ratio * (s.U * root.asDiagonal());
    fit.Lambda = std::sqrt(static_cast<double>(z.N())) / ratio * (s.V * root.asDiagonal());
    fit.d = s.d;
    fit.gamma1 = gamma1;
    fit.gamma2 = gamma2;
    fit.method = Method::rpc_general;
    fit.effective_rank = positive_count(dg);
    fit.converged = s.converged;
    fit.iterations = s.iterations;
    return fit;
}

Eigen::VectorXd shrink_weights(const Eigen::VectorXd& d, double gamma) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d.size());
    for (int j = 0; j < d.size(); ++j)
        if (d(j) > 0.0)
            w(j) = std::sqrt(std::max(d(j) - gamma, 0.0) / d(j));
    return w;
}

RidgeSweeps rpc_sweeps(const ScaledData& z, int r, double gamma, const AlgorithmOptions& opts) {
    check_rank_arg(z, r);
    if (!(gamma >= 0.0))
        throw ValidationError("rpc_sweeps: gamma must be nonnegative");

    const Eigen::MatrixXd& Z = z.Z;
    Rng rng(opts.seed);
    Eigen::MatrixXd F = thin_q(rng.gaussian(z.T(), r)); // orthonormal start, unit weights
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(z.N(), r);
    Eigen::MatrixXd product = Eigen::MatrixXd::Zero(z.T(), z.N());

    RidgeSweeps out;
    const Eigen::MatrixXd eye = gamma * Eigen::MatrixXd::Identity(r, r);
    double prev_change = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opts.max_iters; ++it) {
        // Ridge update of the loadings, then rotate onto their singular basis.
        Eigen::MatrixXd s = F.transpose() * F + eye;
        L = s.ldlt().solve(F.transpose() * Z).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svl(L, Eigen::ComputeThinU);
        const Eigen::MatrixXd basis = svl.matrixU();
        L = basis * svl.singularValues().asDiagonal();

        // Same for the factors.
        s = L.transpose() * L + eye;
        F = s.ldlt().solve(L.transpose() * Z.transpose()).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svf(F, Eigen::ComputeThinU);
        F = svf.matrixU() * svf.singularValues().asDiagonal();

        // Movement of the plain product hides directions with small weights,
        // so convergence is judged on the eventual deliverable: the
        // soft-thresholded reconstruction of Z within the loading span.
        Eigen::JacobiSVD<Eigen::MatrixXd> svm(Z * basis,
                                              Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd dg = soft_threshold(svm.singularValues(), gamma);
        const Eigen::MatrixXd next =
            svm.matrixU() * dg.asDiagonal() * (basis * svm.matrixV()).transpose();
        const double change = (next - product).norm() / std::max(product.norm(), 1e-300);
        product = next;
        out.iterations = it;
        // Per-sweep movement decays geometrically; stop once the bound on the
        // remaining tail, change * rho / (1 - rho), is below tol.
        if (change < opts.tol) {
            const double rho = change / std::max(prev_change, 1e-300);
            const double tail = rho < 1.0 ? change * rho / (1.0 - rho)
                                          : std::numeric_limits<double>::infinity();
            if (tail < opts.tol ||
                change < 1e4 * std::numeric_limits<double>::epsilon()) {
                out.converged = true;
                break;
            }
        }
        prev_change = change;
    }
    out.F = std::move(F);
    out.Lambda = std::move(L);
    return out;
}

FactorFit algorithm_rpc(const ScaledData& z, int r, double gamma, const AlgorithmOptions& opts,
                        const SvdOptions& svd_opts) {
    (void)svd_opts;
    const RidgeSweeps sweeps = rpc_sweeps(z, r, gamma, opts);

    // Cleanup: rotate the converged loadings basis onto singular vectors of Z
    // and soft-threshold the singular values.
    Eigen::JacobiSVD<Eigen::MatrixXd> svl(sweeps.Lambda, Eigen::ComputeThinU);
    const Eigen::MatrixXd basis = svl.matrixU(); // N x r orthonormal
    Eigen::JacobiSVD<Eigen::MatrixXd> svm(z.Z * basis,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd u = svm.matrixU();
    Eigen::MatrixXd v = basis * svm.matrixV();
    const Eigen::VectorXd d = svm.singularValues();
    fix_signs(u, v);

    const Eigen::VectorXd dg = soft_threshold(d, gamma);
    const Eigen::VectorXd root = dg.cwiseSqrt();
    FactorFit fit;
    fit.F = std::sqrt(static_cast<double>(z.T())) * u * root.asDiagonal();
    fit.Lambda = std::sqrt(static_cast<double>(z.N())) * v * root.asDiagonal();
    fit.d = d;
    fit.gamma1 = fit.gamma2 = gamma;
    fit.method = Method::rpc;
    fit.effective_rank = positive_count(dg);
    fit.converged = sweeps.converged;
    fit.iterations = sweeps.iterations;
    return fit;
}

CommonComponent common_component(const FactorFit& fit) {
    CommonComponent c;
    c.C = fit.F * fit.Lambda.transpose();
    c.method = fit.method;
    c.rank = fit.effective_rank;
    return c;
}

CommonComponent common_component(const FactorFit& fit, const StandardizationInfo& info) {
    CommonComponent c = common_component(fit);
    c.C = destandardize(c.C, info);
    return c;
}

} // namespace factorkit
