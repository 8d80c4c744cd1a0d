#include "factorkit/inference.hpp"
#include "factorkit/errors.hpp"

#include <Eigen/LU>

#include <cmath>

namespace factorkit {

int newey_west_default_lags(int T) {
    if (T < 1)
        throw ValidationError("sample size must be positive");
    return static_cast<int>(std::floor(4.0 * std::pow(T / 100.0, 2.0 / 9.0)));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError("quantile level must be inside (0, 1)");

    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};

    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact cdf tightens the tails.
    const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = err * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

namespace {

// Unshrunk variance-weighted view of an svd-backed fit, retained columns
// only. `scale_F` and `scale_L` map it back to the fit's own normalization.
struct PcView {
    Eigen::MatrixXd F, L;
    Eigen::VectorXd d;
    Eigen::VectorXd thresh;
    Eigen::VectorXd scale_F, scale_L;
    std::vector<int> retained;
    double gamma_eff = 0.0;
};

PcView pc_view(const FactorFit& fit) {
    if (fit.method == Method::constrained)
        throw ValidationError("variance formulas need an svd-backed fit, not a constrained one");
    const int r = fit.r();
    if (fit.d.size() != r)
        throw ValidationError("fit is missing its singular values");

    PcView v;
    double ratio = 1.0;
    switch (fit.method) {
    case Method::apc:
    case Method::pc:
        v.gamma_eff = 0.0;
        break;
    case Method::rpc:
        v.gamma_eff = fit.gamma1;
        break;
    case Method::rpc_general:
        v.gamma_eff = std::sqrt(fit.gamma1 * fit.gamma2);
        ratio = std::pow(fit.gamma2 / fit.gamma1, 0.25);
        break;
    default:
        throw ValidationError("unsupported fit method");
    }

    std::vector<double> dk, tk, sf, sl;
    for (int j = 0; j < r; ++j) {
        const double dj = fit.d(j);
        const double tj = dj - v.gamma_eff;
        if (tj <= 0.0 || dj <= 0.0)
            continue;
        v.retained.push_back(j);
        dk.push_back(dj);
        tk.push_back(tj);
        const double root = std::sqrt(tj / dj);
        switch (fit.method) {
        case Method::apc:
            sf.push_back(1.0 / std::sqrt(dj));
            sl.push_back(std::sqrt(dj));
            break;
        case Method::pc:
            sf.push_back(1.0);
            sl.push_back(1.0);
            break;
        case Method::rpc:
            sf.push_back(root);
            sl.push_back(root);
            break;
        default: // rpc_general
            sf.push_back(root * ratio);
            sl.push_back(root / ratio);
            break;
        }
    }
    const int k = static_cast<int>(v.retained.size());
    if (k == 0)
        throw ValidationError("no retained factor columns at this threshold");

    v.d = Eigen::Map<Eigen::VectorXd>(dk.data(), k);
    v.thresh = Eigen::Map<Eigen::VectorXd>(tk.data(), k);
    v.scale_F = Eigen::Map<Eigen::VectorXd>(sf.data(), k);
    v.scale_L = Eigen::Map<Eigen::VectorXd>(sl.data(), k);
    v.F.resize(fit.T(), k);
    v.L.resize(fit.N(), k);
    for (int c = 0; c < k; ++c) {
        v.F.col(c) = fit.F.col(v.retained[c]) / v.scale_F(c);
        v.L.col(c) = fit.Lambda.col(v.retained[c]) / v.scale_L(c);
    }
    return v;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat) {
    const Eigen::LDLT<Eigen::MatrixXd> f(bread);
    const Eigen::MatrixXd half = f.solve(meat);
    return symmetrize(f.solve(half.transpose()).transpose());
}

} // namespace

AvarEstimates avar(const FactorFit& fit, const ScaledData& z, int i, int t, int hac_lags) {
    const int T = fit.T();
    const int N = fit.N();
    if (z.T() != T || z.N() != N)
        throw ValidationError("data dimensions do not match the fit");
    if (i < 0 || i >= N)
        throw ValidationError("series index out of range");
    if (t < 0 || t >= T)
        throw ValidationError("period index out of range");
    const int lags = hac_lags < 0 ? newey_west_default_lags(T) : hac_lags;
    if (lags >= T)
        throw ValidationError("HAC lag count must be below the sample size");

    const PcView v = pc_view(fit);
    const int k = static_cast<int>(v.retained.size());

    const Eigen::MatrixXd E = z.scale * z.Z - v.F * v.L.transpose();
    const Eigen::MatrixXd S_L = v.L.transpose() * v.L / N;
    const Eigen::MatrixXd S_F = v.F.transpose() * v.F / T;

    AvarEstimates out;
    out.lags = lags;
    out.retained = k;

    const Eigen::ArrayXd et2 = E.row(t).transpose().array().square();
    out.Gamma_t = symmetrize(v.L.transpose() * et2.matrix().asDiagonal() * v.L / N);

    const Eigen::MatrixXd g = v.F.array().colwise() * E.col(i).array();
    Eigen::MatrixXd phi = g.transpose() * g / T;
    for (int l = 1; l <= lags; ++l) {
        const double w = 1.0 - static_cast<double>(l) / (lags + 1);
        const Eigen::MatrixXd om =
            g.bottomRows(T - l).transpose() * g.topRows(T - l) / T;
        phi += w * (om + om.transpose());
    }
    out.Phi_i = symmetrize(phi);

    const Eigen::MatrixXd avar_F_pc = sandwich(S_L, out.Gamma_t);
    const Eigen::MatrixXd avar_L_pc = sandwich(S_F, out.Phi_i);
    out.avar_F_t =
        symmetrize(v.scale_F.asDiagonal() * avar_F_pc * v.scale_F.asDiagonal());
    out.avar_Lambda_i =
        symmetrize(v.scale_L.asDiagonal() * avar_L_pc * v.scale_L.asDiagonal());

    Eigen::VectorXd f_t(k), lam_i(k);
    for (int c = 0; c < k; ++c) {
        f_t(c) = fit.F(t, v.retained[c]);
        lam_i(c) = fit.Lambda(i, v.retained[c]);
    }
    out.A_C_it = lam_i.dot(out.avar_F_t * lam_i) / T + f_t.dot(out.avar_Lambda_i * f_t) / N;
    return out;
}

CommonComponentCi common_component_ci(const FactorFit& fit, const AvarEstimates& av, int i,
                                      int t, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw ValidationError("confidence level must be inside (0, 1)");
    if (i < 0 || i >= fit.N() || t < 0 || t >= fit.T())
        throw ValidationError("index out of range");

    CommonComponentCi ci;
    ci.level = level;
    ci.estimate = fit.F.row(t).dot(fit.Lambda.row(i));

    // Thresholding pulls the fitted value toward zero by a deterministic
    // amount; on retained columns the correction recovers the unshrunk fit
    // exactly.
    double gamma_eff = 0.0;
    if (fit.method == Method::rpc)
        gamma_eff = fit.gamma1;
    else if (fit.method == Method::rpc_general)
        gamma_eff = std::sqrt(fit.gamma1 * fit.gamma2);
    if (gamma_eff > 0.0) {
        double s = 0.0;
        for (int j = 0; j < fit.r(); ++j) {
            const double tj = fit.d(j) - gamma_eff;
            if (tj > 0.0)
                s += fit.F(t, j) * fit.Lambda(i, j) / tj;
        }
        ci.bias = -gamma_eff * s;
    }

    ci.corrected = ci.estimate - ci.bias;
    const double zq = normal_quantile(0.5 + 0.5 * level);
    ci.half_width = zq * std::sqrt(std::max(av.A_C_it, 0.0));
    ci.lower = ci.corrected - ci.half_width;
    ci.upper = ci.corrected + ci.half_width;
    return ci;
}

double amse_ratio(double delta1, double C0_it, double avar_C) {
    if (!(delta1 >= 0.0 && delta1 <= 1.0))
        throw ValidationError("leading shrinkage weight must be in [0, 1]");
    if (!(avar_C > 0.0))
        throw ValidationError("variance must be positive");
    const double b = delta1 - 1.0;
    return b * b * C0_it * C0_it / avar_C + delta1 * delta1;
}

RotationDiagnostics rotation_diagnostics(const FactorFit& fit, const Eigen::MatrixXd& F0,
                                         const Eigen::MatrixXd& Lambda0) {
    const PcView v = pc_view(fit);
    const int k = static_cast<int>(v.retained.size());
    const int T = fit.T();
    const int N = fit.N();
    if (F0.rows() != T || Lambda0.rows() != N)
        throw ValidationError("truth matrices do not match the fit dimensions");
    if (F0.cols() != k || Lambda0.cols() != k)
        throw ValidationError("truth has " + std::to_string(F0.cols()) +
                              " factors but the fit retains " + std::to_string(k));

    // Unit-scale estimates: F with orthonormal columns times sqrt(T), and
    // loadings carrying the full singular-value weight.
    const Eigen::MatrixXd f_tilde = v.F * v.d.cwiseSqrt().cwiseInverse().asDiagonal();
    const Eigen::MatrixXd l_tilde = v.L * v.d.cwiseSqrt().asDiagonal();

    RotationDiagnostics rot;
    rot.delta = (v.thresh.array() / v.d.array()).sqrt().matrix();
    rot.H_tilde = (Lambda0.transpose() * Lambda0 / N) * (F0.transpose() * f_tilde / T) *
                  v.d.array().square().inverse().matrix().asDiagonal();

    const Eigen::MatrixXd cross_l = l_tilde.transpose() * Lambda0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_l(cross_l);
    if (!lu_l.isInvertible())
        throw ValidationError("degenerate loading cross-moments in this draw");
    rot.H1 = (Lambda0.transpose() * Lambda0) * lu_l.inverse();

    Eigen::FullPivLU<Eigen::MatrixXd> lu_f(F0.transpose() * F0);
    if (!lu_f.isInvertible())
        throw ValidationError("degenerate factor gram matrix in this draw");
    rot.H2 = lu_f.inverse() * (F0.transpose() * f_tilde);

    rot.H_hat = rot.H_tilde * v.d.cwiseSqrt().asDiagonal();
    rot.H_bar = rot.H_hat * rot.delta.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu_h(rot.H_hat);
    if (!lu_h.isInvertible())
        throw ValidationError("degenerate rotation in this draw");
    rot.G_bar = rot.delta.asDiagonal() * lu_h.inverse();
    return rot;
}

RegressionResult regress(const Eigen::VectorXd& y, const FactorFit& fit, double kappa) {
    const int T = fit.T();
    if (y.size() != T)
        throw ValidationError("response length does not match the fit");
    if (!(kappa >= 0.0))
        throw ValidationError("ridge penalty must be nonnegative");

    std::vector<int> retained;
    for (int j = 0; j < fit.r(); ++j)
        if (fit.F.col(j).norm() > 0.0)
            retained.push_back(j);
    const int k = static_cast<int>(retained.size());
    if (k == 0)
        throw ValidationError("fit retains no factor columns to regress on");

    Eigen::MatrixXd f(T, k);
    for (int c = 0; c < k; ++c)
        f.col(c) = fit.F.col(retained[c]);

    // Ridge as a rescaling of least squares through the Gram matrix:
    // (M + kappa/T I)^{-1} M coef_ols with M = F'F/T, which matches the
    // direct penalized solve exactly.
    const Eigen::MatrixXd m = f.transpose() * f / T;
    const Eigen::LDLT<Eigen::MatrixXd> m_fact(m);
    if (m_fact.info() != Eigen::Success)
        throw ValidationError("factor gram matrix is singular");

    RegressionResult out;
    out.retained = retained;
    out.kappa = kappa;
    out.coef_ols = m_fact.solve(f.transpose() * y / T);
    Eigen::MatrixXd m_pen = m;
    m_pen.diagonal().array() += kappa / T;
    out.coef_ridge = m_pen.ldlt().solve(m * out.coef_ols);
    out.fitted_ols = f * out.coef_ols;
    return out;
}

} // namespace factorkit
