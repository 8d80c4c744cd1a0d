#pragma once

#include "factorkit/estimators.hpp"
#include "factorkit/panel.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>

namespace factorkit {

/// Linear restrictions R vec(Lambda) = phi on the reported (panel-unit)
/// loading matrix. vec stacks Lambda column by column, so loading (i, j)
/// (1-based series i, factor j) sits at flat index (j-1)*N + i - 1.
struct RestrictionSet {
    int m = 0; ///< number of restrictions
    int N = 0;
    int r = 0;
    Eigen::SparseMatrix<double> R; ///< m x (N*r)
    Eigen::VectorXd phi;           ///< length m

    bool empty() const { return m == 0; }
    /// Throws ValidationError unless m < N*r and R has full row rank
    /// (smallest singular value > 1e-10 times the largest).
    void validate() const;
};

/// Build a restriction set from JSON text of the form
///   {"r": 3, "constraints": [
///      {"terms": [{"i": 1, "j": 2, "c": 1.0}], "phi": 0.0}, ...]}
/// with 1-based series index i and factor index j.
RestrictionSet restrictions_from_json(const std::string& json_text, int N);
RestrictionSet load_restrictions(const std::string& path, int N);

/// Ridge factor update F = Z Lambda (Lambda'Lambda + gamma I)^{-1}.
/// Z, Lambda and the result live in one consistent unit system.
Eigen::MatrixXd f_update(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Lambda, double gamma);

/// Penalized loading update solving
///   ((F'F + gamma I) kron I_N + tau R'R) vec(L) = vec(Z'F) + tau R' phi.
/// The Kronecker block is never materialized; with restrictions the solve
/// reduces to an m x m system. tau = 0 or rs == nullptr gives the plain
/// ridge update Z'F (F'F + gamma I)^{-1}.
Eigen::MatrixXd lambda_update_penalized(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F,
                                        double gamma, double tau, const RestrictionSet* rs);

/// Exact constrained update (tau -> infinity): the ridge solution projected
/// onto {R vec(L) = phi} in the metric (F'F + gamma I) kron I_N.
Eigen::MatrixXd lambda_update_exact(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F,
                                    double gamma, const RestrictionSet& rs);

struct ConstrainedFit {
    FactorFit fit;
    double constraint_residual = 0.0; ///< max |R vec(Lambda) - phi|
    bool converged = false;
    int iterations = 0;
};

/// Alternate exact constrained loading updates with ridge factor updates,
/// starting from the closed-form rpc solution. Converged when the Gram
/// matrices of successive iterates move less than tol in Frobenius norm.
/// Non-convergence is flagged, not thrown.
ConstrainedFit constrained_fit(const ScaledData& z, int r, double gamma,
                               const RestrictionSet& rs, double tol = 1e-8,
                               int max_iters = 20000, const SvdOptions& opts = {});

} // namespace factorkit
