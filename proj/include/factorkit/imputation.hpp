#pragma once

#include "factorkit/panel.hpp"
#include "factorkit/svdcore.hpp"

#include <vector>

namespace factorkit {

/// Outcome of iterative low-rank imputation.
struct ImputationResult {
    Panel completed;        ///< all cells observed; input cells bit-identical
    int k = 0;              ///< factors used per iteration
    int iterations = 0;     ///< iterations actually run
    bool converged = false; ///< false when max_iter was exhausted
    std::vector<double> delta_history; ///< per-iteration max change on imputed
                                       ///< cells, standardized units
};

/// Fill missing cells by alternating between standardizing the current
/// completed panel, fitting k factors, and replacing the missing cells with
/// the fitted common component. Missing cells start at their column means.
/// Standardization is redone every pass because imputed values shift the
/// column moments. Observed cells are never rewritten.
///
/// Requires k >= 1 and at least k+1 observed entries in every column.
/// Exhausting max_iter flags the result instead of throwing.
ImputationResult em_impute(const Panel& panel, int k, double tol = 1e-6, int max_iter = 500,
                           const SvdOptions& opts = SvdOptions{});

/// Convenience wrapper that picks k by running rank selection on the rows
/// with no missing entries, then delegates to em_impute. Uses the
/// gamma-thresholded count, floored at one factor.
ImputationResult em_impute_auto(const Panel& panel, int rmax = 8, double gamma = 0.05,
                                double tol = 1e-6, int max_iter = 500,
                                const SvdOptions& opts = SvdOptions{});

} // namespace factorkit
