#pragma once

#include "factorkit/panel.hpp"
#include "factorkit/svdcore.hpp"

#include <Eigen/Dense>

namespace factorkit {

/// Penalty ((N+T)/(N*T)) * log(N*T/(N+T)).
double penalty_g(int N, int T);

/// ssr[k] = 1 - sum_{j<=k} d_j^2 and its soft-thresholded counterpart
/// 1 - sum_{j<=k} (d_j - gamma)_+^2, for k = 0..rmax. Requires Z scaled from
/// a population-standardized complete panel so that ||Z||_F^2 = 1.
struct SsrCurves {
    Eigen::VectorXd plain;  ///< length rmax+1, index k
    Eigen::VectorXd thresh; ///< length rmax+1
    Eigen::VectorXd d;      ///< top rmax singular values
    bool floored = false;   ///< some ssr was clamped at 1e-15
};

SsrCurves ssr_curves(const ScaledData& z, int rmax, double gamma, const SvdOptions& opts = {});

struct SelectionResult {
    Eigen::VectorXd ssr_plain, ssr_thresh; ///< length rmax+1
    Eigen::VectorXd ic_plain, ic_thresh;   ///< log(ssr) + k*g
    Eigen::VectorXd d;                     ///< top rmax singular values
    int r_hat = 0; ///< argmin of ic_plain, ties to the smaller k
    int r_bar = 0; ///< argmin of ic_thresh, always <= r_hat
    double gamma = 0.0;
    double penalty = 0.0;
    bool floored = false;
};

SelectionResult select(const ScaledData& z, int rmax = 8, double gamma = 0.05,
                       const SvdOptions& opts = {});

/// Per-k difference ic_thresh[k] - ic_plain[k], exact and the first-order
/// approximation gamma * sum_{j<=k} (2 d_j - gamma) / ssr_plain[k].
struct IcGap {
    Eigen::VectorXd exact;
    Eigen::VectorXd approx;
};

IcGap ic_gap_decomposition(const SelectionResult& sel);

} // namespace factorkit
