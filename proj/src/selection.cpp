#include "factorkit/selection.hpp"
#include "factorkit/errors.hpp"

#include <cmath>

namespace factorkit {

namespace {
constexpr double kSsrFloor = 1e-15;
}

double penalty_g(int N, int T) {
    if (N < 2 || T < 2)
        throw ValidationError("penalty_g needs N >= 2 and T >= 2");
    const double nt = static_cast<double>(N) * static_cast<double>(T);
    const double sum = static_cast<double>(N + T);
    return (sum / nt) * std::log(nt / sum);
}

SsrCurves ssr_curves(const ScaledData& z, int rmax, double gamma, const SvdOptions& opts) {
    const int mindim = std::min(z.T(), z.N());
    if (rmax < 1 || rmax >= mindim)
        throw ValidationError("rmax must be in 1.." + std::to_string(mindim - 1) + ", got " +
                              std::to_string(rmax));
    if (!(gamma >= 0.0))
        throw ValidationError("gamma must be nonnegative");
    const double total = z.Z.squaredNorm();
    if (std::abs(total - 1.0) > 1e-6)
        throw ValidationError("scaled data must have unit squared Frobenius norm "
                              "(population-standardized complete panel), got " +
                              std::to_string(total));

    const PartialSvd s = top_k_svd(z.Z, rmax, opts);
    const Eigen::VectorXd dg = soft_threshold(s.d, gamma);

    SsrCurves out;
    out.d = s.d;
    out.plain.resize(rmax + 1);
    out.thresh.resize(rmax + 1);
    out.plain(0) = out.thresh(0) = 1.0;
    double acc_plain = 0.0, acc_thresh = 0.0;
    for (int k = 1; k <= rmax; ++k) {
        acc_plain += s.d(k - 1) * s.d(k - 1);
        acc_thresh += dg(k - 1) * dg(k - 1);
        double p = 1.0 - acc_plain;
        double q = 1.0 - acc_thresh;
        if (p < kSsrFloor) {
            p = kSsrFloor;
            out.floored = true;
        }
        if (q < kSsrFloor) {
            q = kSsrFloor;
            out.floored = true;
        }
        out.plain(k) = p;
        out.thresh(k) = q;
    }
    return out;
}

SelectionResult select(const ScaledData& z, int rmax, double gamma, const SvdOptions& opts) {
    const SsrCurves curves = ssr_curves(z, rmax, gamma, opts);
    const double g = penalty_g(z.N(), z.T());

    SelectionResult sel;
    sel.ssr_plain = curves.plain;
    sel.ssr_thresh = curves.thresh;
    sel.d = curves.d;
    sel.gamma = gamma;
    sel.penalty = g;
    sel.floored = curves.floored;
    sel.ic_plain.resize(rmax + 1);
    sel.ic_thresh.resize(rmax + 1);
    for (int k = 0; k <= rmax; ++k) {
        sel.ic_plain(k) = std::log(curves.plain(k)) + k * g;
        sel.ic_thresh(k) = std::log(curves.thresh(k)) + k * g;
    }
    // Strict < keeps ties at the smaller k.
    sel.r_hat = 0;
    sel.r_bar = 0;
    for (int k = 1; k <= rmax; ++k) {
        if (sel.ic_plain(k) < sel.ic_plain(sel.r_hat))
            sel.r_hat = k;
        if (sel.ic_thresh(k) < sel.ic_thresh(sel.r_bar))
            sel.r_bar = k;
    }
    return sel;
}

IcGap ic_gap_decomposition(const SelectionResult& sel) {
    const int kmax = static_cast<int>(sel.ic_plain.size()) - 1;
    IcGap gap;
    gap.exact = sel.ic_thresh - sel.ic_plain;
    gap.approx.resize(kmax + 1);
    gap.approx(0) = 0.0;
    double acc = 0.0;
    for (int k = 1; k <= kmax; ++k) {
        acc += sel.gamma * (2.0 * sel.d(k - 1) - sel.gamma);
        gap.approx(k) = acc / sel.ssr_plain(k);
    }
    return gap;
}

} // namespace factorkit
