#include "factorkit/svdcore.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/rng.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace factorkit {

namespace {

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

PartialSvd top_k_svd(const Eigen::MatrixXd& Z, int k, const SvdOptions& opts) {
    const int t_rows = static_cast<int>(Z.rows());
    const int n_cols = static_cast<int>(Z.cols());
    const int mindim = std::min(t_rows, n_cols);
    if (t_rows < 1 || n_cols < 1)
        throw ValidationError("top_k_svd: empty matrix");
    if (k < 1 || k > mindim)
        throw ValidationError("top_k_svd: k must be in 1.." + std::to_string(mindim) + ", got " +
                              std::to_string(k));
    if (!Z.allFinite())
        throw ValidationError("top_k_svd: matrix has non-finite entries");

    PartialSvd out;
    Rng rng(opts.seed);

    if (Z.norm() == 0.0) {
        out.U = thin_q(rng.gaussian(t_rows, k));
        out.V = thin_q(rng.gaussian(n_cols, k));
        out.d = Eigen::VectorXd::Zero(k);
        out.converged = true;
        out.degenerate = true;
        out.has_ties = k > 1;
        fix_signs(out.U, out.V);
        return out;
    }

    const int ell = std::min(k + opts.oversample, mindim);
    Eigen::MatrixXd q = thin_q(Z * rng.gaussian(n_cols, ell));

    Eigen::MatrixXd u_prev;
    for (int it = 1; it <= opts.max_iters; ++it) {
        // One power pass with intermediate orthonormalization.
        const Eigen::MatrixXd qn = thin_q(Z.transpose() * q);
        q = thin_q(Z * qn);
        out.iterations = it;
        if (it < opts.min_power_iters)
            continue;

        // Rayleigh-Ritz on the current subspace.
        const Eigen::MatrixXd w = Z.transpose() * q; // N x ell
        Eigen::JacobiSVD<Eigen::MatrixXd> small(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::MatrixXd u = q * small.matrixV().leftCols(k);
        Eigen::MatrixXd v = small.matrixU().leftCols(k);
        Eigen::VectorXd d = small.singularValues().head(k);

        const double scale = std::max(1.0, d(0));
        const double residual = (Z * v - u * d.asDiagonal()).norm();
        // Movement of the extracted basis; near-ties in the tail can keep the
        // oversampled subspace rotating without hurting the top-k triplets.
        double moved = 1.0;
        if (u_prev.size() > 0)
            moved = (u - u_prev * (u_prev.transpose() * u)).norm();
        u_prev = u;

        if (residual <= opts.tol * scale || it == opts.max_iters || moved <= 1e-14) {
            out.U = std::move(u);
            out.V = std::move(v);
            out.d = std::move(d);
            out.converged = residual <= opts.tol * scale;
            break;
        }
    }

    fix_signs(out.U, out.V);
    for (int j = 0; j + 1 < k; ++j)
        if (std::abs(out.d(j) - out.d(j + 1)) <= 1e-12)
            out.has_ties = true;
    return out;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& d, double gamma) {
    if (!(gamma >= 0.0))
        throw ValidationError("soft_threshold: gamma must be nonnegative");
    return (d.array() - gamma).max(0.0);
}

int positive_count(const Eigen::VectorXd& d) {
    int n = 0;
    for (int j = 0; j < d.size(); ++j)
        if (d(j) > 0.0)
            ++n;
    return n;
}

Eigen::MatrixXd svt(const Eigen::MatrixXd& Z, int k, double gamma, const SvdOptions& opts) {
    const PartialSvd s = top_k_svd(Z, k, opts);
    const Eigen::VectorXd dg = soft_threshold(s.d, gamma);
    return s.U * dg.asDiagonal() * s.V.transpose();
}

} // namespace factorkit
