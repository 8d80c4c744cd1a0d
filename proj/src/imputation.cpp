#include "factorkit/imputation.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/estimators.hpp"
#include "factorkit/selection.hpp"

#include <algorithm>
#include <cmath>

namespace factorkit {

ImputationResult em_impute(const Panel& panel, int k, double tol, int max_iter,
                           const SvdOptions& opts) {
    panel.validate();
    if (k < 1)
        throw ValidationError("imputation needs at least one factor");
    if (k > std::min(panel.T(), panel.N()))
        throw ValidationError("factor count exceeds the panel dimensions");
    if (!(tol > 0.0) || max_iter < 1)
        throw ValidationError("tolerance must be positive and max_iter at least 1");

    const int T = panel.T();
    const int N = panel.N();
    for (int i = 0; i < N; ++i) {
        int obs = 0;
        for (int t = 0; t < T; ++t)
            obs += panel.mask(t, i) ? 1 : 0;
        if (obs < k + 1) {
            const std::string name =
                panel.series_names.empty() ? ("column " + std::to_string(i + 1))
                                           : ("series '" + panel.series_names[i] + "'");
            throw ValidationError(name + " has " + std::to_string(obs) +
                                  " observed entries, need at least " + std::to_string(k + 1));
        }
    }

    std::vector<std::pair<int, int>> missing;
    for (int i = 0; i < N; ++i)
        for (int t = 0; t < T; ++t)
            if (!panel.mask(t, i))
                missing.emplace_back(t, i);

    // Working copy in original units; only missing cells are ever written,
    // so observed cells stay bit-identical to the input.
    Eigen::MatrixXd x = panel.values;
    for (int i = 0; i < N; ++i) {
        double sum = 0.0;
        int obs = 0;
        for (int t = 0; t < T; ++t)
            if (panel.mask(t, i)) {
                sum += x(t, i);
                ++obs;
            }
        const double mean = sum / obs;
        for (int t = 0; t < T; ++t)
            if (!panel.mask(t, i))
                x(t, i) = mean;
    }

    Panel work;
    work.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, N, true);
    work.series_names = panel.series_names;

    ImputationResult out;
    out.k = k;
    for (int it = 1; it <= max_iter; ++it) {
        work.values = x;
        const auto [std_panel, info] = standardize(work, VarianceConvention::population);
        const ScaledData z = scale(std_panel);
        const FactorFit fit = pc(z, k, opts);
        const Eigen::MatrixXd c = fit.F * fit.Lambda.transpose();

        double delta = 0.0;
        for (const auto& [t, i] : missing) {
            delta = std::max(delta, std::abs(c(t, i) - std_panel.values(t, i)));
            x(t, i) = c(t, i) * info.sds(i) + info.means(i);
        }
        out.delta_history.push_back(delta);
        out.iterations = it;
        if (delta < tol) {
            out.converged = true;
            break;
        }
    }

    out.completed = panel;
    out.completed.values = x;
    out.completed.mask.setConstant(T, N, true);
    return out;
}

ImputationResult em_impute_auto(const Panel& panel, int rmax, double gamma, double tol,
                                int max_iter, const SvdOptions& opts) {
    panel.validate();
    std::vector<int> full_rows;
    for (int t = 0; t < panel.T(); ++t) {
        bool full = true;
        for (int i = 0; i < panel.N(); ++i)
            if (!panel.mask(t, i)) {
                full = false;
                break;
            }
        if (full)
            full_rows.push_back(t);
    }
    const int tb = static_cast<int>(full_rows.size());
    if (tb < rmax + 2)
        throw ValidationError("only " + std::to_string(tb) +
                              " fully observed periods; need at least " +
                              std::to_string(rmax + 2) + " to pick the factor count");

    Panel sub;
    sub.values.resize(tb, panel.N());
    for (int j = 0; j < tb; ++j)
        sub.values.row(j) = panel.values.row(full_rows[j]);
    sub.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(tb, panel.N(), true);
    sub.series_names = panel.series_names;

    const auto [std_panel, info] = standardize(sub, VarianceConvention::population);
    const SelectionResult sel = select(scale(std_panel), rmax, gamma);
    return em_impute(panel, std::max(1, sel.r_bar), tol, max_iter, opts);
}

} // namespace factorkit
