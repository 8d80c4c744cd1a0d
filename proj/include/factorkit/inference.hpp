#pragma once

#include "factorkit/estimators.hpp"
#include "factorkit/panel.hpp"

#include <Eigen/Dense>

namespace factorkit {

/// Bartlett truncation lag floor(4*(T/100)^(2/9)), the usual plug-in choice.
int newey_west_default_lags(int T);

/// Inverse standard normal cdf (Acklam's rational approximation plus one
/// Halley refinement step), |error| < 1e-13 on (0,1).
double normal_quantile(double p);

/// Rotation matrices linking a fit to simulation ground truth. Only
/// meaningful when the true factors and loadings are known, so this is a
/// simulation diagnostic. F0 and Lambda0 must be in the same units as the
/// data the fit was computed on.
struct RotationDiagnostics {
    Eigen::MatrixXd H_tilde; ///< aligns the unit-scale factor estimate with truth
    Eigen::MatrixXd H1;      ///< loading-side cross-moment form
    Eigen::MatrixXd H2;      ///< factor-side cross-moment form
    Eigen::MatrixXd H_hat;   ///< variance-weighted variant, H_tilde * diag(d)^{1/2}
    Eigen::MatrixXd H_bar;   ///< shrunk variant, H_hat * diag(delta)
    Eigen::MatrixXd G_bar;   ///< loading-side shrunk variant, diag(delta) * H_hat^{-1}
    Eigen::VectorXd delta;   ///< per-column shrinkage weights sqrt((d-gamma)+/d)
};

RotationDiagnostics rotation_diagnostics(const FactorFit& fit, const Eigen::MatrixXd& F0,
                                         const Eigen::MatrixXd& Lambda0);

/// Plug-in asymptotic variance estimates for one (i, t) pair.
///
/// Gamma_t and Phi_i are score covariances in the variance-weighted
/// normalization; avar_F_t and avar_Lambda_i are expressed in the fit's own
/// normalization (shrunk fits get uniformly smaller variances). A_C_it is
/// the variance of the fitted common component, already on the 1/N + 1/T
/// scale, so a confidence interval uses sqrt(A_C_it) directly.
struct AvarEstimates {
    Eigen::MatrixXd Gamma_t;       ///< cross-section score covariance at t
    Eigen::MatrixXd Phi_i;         ///< HAC time-series score covariance at i
    Eigen::MatrixXd avar_F_t;      ///< sandwich for the period-t factor estimate
    Eigen::MatrixXd avar_Lambda_i; ///< sandwich for the series-i loading estimate
    double A_C_it = 0.0;           ///< variance of the common-component estimate
    int lags = 0;                  ///< HAC lags actually used
    int retained = 0;              ///< factor columns entering the sandwiches
};

/// Residuals are taken against the unshrunk variance-weighted fit spanned by
/// the retained columns; hac_lags < 0 selects the default truncation.
/// Constrained fits have no diagonal factor structure to exploit and are
/// rejected. Indices i, t are zero-based.
AvarEstimates avar(const FactorFit& fit, const ScaledData& z, int i, int t, int hac_lags = -1);

/// Confidence interval for one fitted common-component entry. Shrunk fits
/// carry a deterministic downward bias; `corrected` removes the plug-in
/// estimate of it and the interval is centered there. Unshrunk fits have
/// bias identically zero.
struct CommonComponentCi {
    double estimate = 0.0;
    double bias = 0.0;
    double corrected = 0.0;
    double half_width = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.0;
};

CommonComponentCi common_component_ci(const FactorFit& fit, const AvarEstimates& av, int i,
                                      int t, double level = 0.95);

/// Relative asymptotic mean squared error of a shrunk common-component
/// estimate against the unshrunk one: (delta1-1)^2 * C0^2 / avar_C + delta1^2
/// where delta1 is the leading shrinkage weight. Below one means shrinkage
/// helps, which happens when the signal C0 is weak relative to the noise.
double amse_ratio(double delta1, double C0_it, double avar_C);

/// Least squares of y on the retained factor columns, plus the ridge
/// coefficients for penalty kappa. The ridge solution is obtained by
/// rescaling the least-squares coefficients through the factor Gram matrix,
/// which for these fits is diagonal, so no second solve is needed; it agrees
/// exactly with a direct (F'F + kappa I)^{-1} F'y solve.
struct RegressionResult {
    Eigen::VectorXd coef_ols;   ///< per retained factor column
    Eigen::VectorXd coef_ridge; ///< shrunk toward zero, equals coef_ols at kappa = 0
    Eigen::VectorXd fitted_ols; ///< T-vector, identical across factor normalizations
    std::vector<int> retained;  ///< zero-based indices of the columns used
    double kappa = 0.0;
};

RegressionResult regress(const Eigen::VectorXd& y, const FactorFit& fit, double kappa);

} // namespace factorkit
