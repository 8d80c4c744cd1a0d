#pragma once

#include "factorkit/panel.hpp"
#include "factorkit/svdcore.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace factorkit {

enum class Method { apc, pc, rpc, rpc_general, constrained };

std::string method_name(Method m);

/// Factor estimates in panel units. With Z = U diag(d) V' the conventions are
///   apc:         F = sqrt(T) U,                  Lambda = sqrt(N) V diag(d)
///   pc:          F = sqrt(T) U diag(d)^{1/2},    Lambda = sqrt(N) V diag(d)^{1/2}
///   rpc:         F = sqrt(T) U diag(dg)^{1/2},   Lambda = sqrt(N) V diag(dg)^{1/2}
/// with dg = (d - gamma)_+ . Columns with dg_j = 0 are kept as exact zeros;
/// effective_rank counts the surviving ones.
struct FactorFit {
    Eigen::MatrixXd F;      ///< T x r
    Eigen::MatrixXd Lambda; ///< N x r
    Eigen::VectorXd d;      ///< top r singular values of Z
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    Method method = Method::pc;
    int effective_rank = 0;
    bool converged = true;
    int iterations = 0;

    int T() const { return static_cast<int>(F.rows()); }
    int N() const { return static_cast<int>(Lambda.rows()); }
    int r() const { return static_cast<int>(F.cols()); }
    double gamma() const { return gamma1; }
};

FactorFit apc(const ScaledData& z, int r, const SvdOptions& opts = {});
FactorFit pc(const ScaledData& z, int r, const SvdOptions& opts = {});
FactorFit rpc_closed_form(const ScaledData& z, int r, double gamma, const SvdOptions& opts = {});

/// Asymmetric ridge weights gamma1 on F and gamma2 on Lambda (both > 0).
/// The product F Lambda' depends on the penalties only through
/// sqrt(gamma1 * gamma2).
FactorFit rpc_general(const ScaledData& z, int r, double gamma1, double gamma2,
                      const SvdOptions& opts = {});

/// Per-column shrinkage weights sqrt((d_j - gamma)_+ / d_j), zero when d_j = 0.
Eigen::VectorXd shrink_weights(const Eigen::VectorXd& d, double gamma);

/// Converged state of the alternating ridge sweeps, in scaled (Z) units,
/// before the final orthogonalizing cleanup.
struct RidgeSweeps {
    Eigen::MatrixXd F;      ///< T x r
    Eigen::MatrixXd Lambda; ///< N x r
    int iterations = 0;
    bool converged = false;
};

struct AlgorithmOptions {
    double tol = 1e-10; ///< bound on the remaining relative change of the
                        ///< thresholded reconstruction (see rpc_sweeps)
    int max_iters = 2000;
    std::uint64_t seed = 0xA15EEDULL; ///< seeds the orthonormal start
};

/// Alternating ridge updates
///   Lambda <- Z'F (F'F + gamma I)^{-1}, then Lambda <- svd reorthogonalization
///   F      <- Z Lambda (Lambda'Lambda + gamma I)^{-1}, likewise
/// starting from a seeded random orthonormal F. Convergence is judged on the
/// eventual deliverable, the soft-thresholded reconstruction of Z within the
/// current loading span: the loop stops once the extrapolated remaining
/// change of that matrix falls below tol.
RidgeSweeps rpc_sweeps(const ScaledData& z, int r, double gamma,
                       const AlgorithmOptions& opts = {});

/// Iterative route to the rpc solution: ridge sweeps plus a cleanup that
/// rotates the converged iterates onto singular vectors and soft-thresholds.
/// Agrees with rpc_closed_form up to iteration tolerance.
FactorFit algorithm_rpc(const ScaledData& z, int r, double gamma,
                        const AlgorithmOptions& opts = {}, const SvdOptions& svd_opts = {});

struct CommonComponent {
    Eigen::MatrixXd C; ///< T x N
    Method method = Method::pc;
    int rank = 0;
};

/// F Lambda' in panel units; identical for apc and pc fits.
CommonComponent common_component(const FactorFit& fit);
/// Same, mapped back to original units via the standardization statistics.
CommonComponent common_component(const FactorFit& fit, const StandardizationInfo& info);

} // namespace factorkit
