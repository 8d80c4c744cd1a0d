#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace factorkit {

/// Leading part of a singular value decomposition Z ~ U diag(d) V'.
/// U and V have orthonormal columns, d is nonincreasing and nonnegative, and
/// the sign of each column pair is fixed so the largest-magnitude entry of
/// the U column is positive.
struct PartialSvd {
    Eigen::MatrixXd U; ///< T x k
    Eigen::VectorXd d; ///< k
    Eigen::MatrixXd V; ///< N x k
    bool converged = false;
    bool degenerate = false; ///< input was identically zero
    bool has_ties = false;   ///< adjacent singular values within 1e-12
    int iterations = 0;
};

struct SvdOptions {
    int oversample = 10;
    int min_power_iters = 2;
    int max_iters = 300;
    double tol = 1e-12; ///< on the residual ||Z v_j - d_j u_j|| / max(1, d_1)
    std::uint64_t seed = 0x5EEDF00DULL;
};

/// Randomized subspace iteration for the top k singular triplets.
/// Deterministic for a fixed seed. Sets converged=false (without throwing)
/// when max_iters power passes do not reach tol.
PartialSvd top_k_svd(const Eigen::MatrixXd& Z, int k, const SvdOptions& opts = {});

/// Elementwise (d_j - gamma)_+ . Requires gamma >= 0.
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& d, double gamma);

/// Number of strictly positive entries.
int positive_count(const Eigen::VectorXd& d);

/// Rank-k singular value thresholding: U_k (D_k - gamma I)_+ V_k'.
Eigen::MatrixXd svt(const Eigen::MatrixXd& Z, int k, double gamma, const SvdOptions& opts = {});

} // namespace factorkit
