#pragma once

#include "factorkit/panel.hpp"
#include "factorkit/svdcore.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace factorkit {

/// Simulation designs: factors and loadings drawn as iid standard normals,
/// or built from a fixed singular-value ladder so the smallest factors are
/// deliberately weak.
enum class Dgp { gaussian_factors, fixed_spectrum };

const char* dgp_name(Dgp dgp);
Dgp dgp_from_name(const std::string& name);

struct DgpConfig {
    Dgp dgp = Dgp::gaussian_factors;
    int N = 100;
    int T = 100;
    int r = 5;                    ///< true factor count
    double omega = 5.0;           ///< outlier standard deviation
    double mu = 5.0;              ///< outlier mean
    double kappa_units = 0.10;    ///< fraction of contaminated series
    double kappa_periods = 0.03;  ///< fraction of contaminated periods
    double theta = 1.0;           ///< multiplier on the smallest ladder value
    bool outliers_on = false;
    bool per_unit_periods = false; ///< redraw contaminated periods per series
    std::uint64_t seed = 0;

    void validate() const;
};

/// Ground truth behind one simulated panel: X = C0 + e + S.
struct SimTruth {
    Eigen::MatrixXd F0;     ///< T x r true factors
    Eigen::MatrixXd Lambda0; ///< N x r true loadings
    Eigen::MatrixXd C0;     ///< T x N common component, F0 * Lambda0'
    Eigen::MatrixXd e;      ///< T x N idiosyncratic noise
    Eigen::MatrixXd S;      ///< T x N sparse outliers, zero off the chosen grid
};

/// Draw one panel. The ladder design uses singular values
/// (1, 0.8, 0.5, 0.3, 0.2*theta) scaled so the signal is comparable to unit
/// noise. Outliers are N(mu, omega^2) on the product of ceil(kappa_units*N)
/// series and ceil(kappa_periods*T) periods chosen uniformly at random.
std::pair<Panel, SimTruth> generate(const DgpConfig& config);

/// Per-replication diagnostics. Share quantities are variance fractions;
/// r_star counts the components of C0 whose squared-singular-value share
/// exceeds the share threshold. Spanning R2 values regress the last selected
/// factor direction on the top-r_star singular directions of C0 and are
/// absent when the respective selection picked zero factors.
struct SimMetrics {
    int r_star = 0;
    int r_hat = 0;
    int r_bar = 0;
    double C_r_total = 0.0;    ///< var(C0) / var(X)
    double C_r_smallest = 0.0; ///< smallest component's share within C0
    double c_S = 0.0;          ///< var(S) / var(X)
    std::optional<double> R2_hat;
    std::optional<double> R2_bar;
};

SimMetrics evaluate(const Panel& panel, const SimTruth& truth, double gamma, int rmax,
                    double share_threshold = 0.05, const SvdOptions& opts = SvdOptions{});

/// Replication averages for one configuration.
struct SweepRow {
    DgpConfig config;
    int reps = 0;
    double mean_r_star = 0.0;
    double mean_r_hat = 0.0;
    double mean_r_bar = 0.0;
    double prob_r_hat_eq_r = 0.0;
    double prob_r_bar_eq_r = 0.0;
    double prob_r_hat_eq_rstar = 0.0;
    double prob_r_bar_eq_rstar = 0.0;
    double mean_C_r_total = 0.0;
    double mean_C_r_smallest = 0.0;
    double mean_c_S = 0.0;
    std::optional<double> mean_R2_hat; ///< over replications where defined
    std::optional<double> mean_R2_bar;
};

/// Run `reps` replications of every configuration. Replication seeds are
/// derived from (seed, config index, rep index), and results are aggregated
/// in index order after all workers finish, so output is bit-identical for
/// any worker count. max_threads = 0 reads FACTORKIT_THREADS, falling back
/// to the hardware count.
std::vector<SweepRow> sweep(const std::vector<DgpConfig>& grid, int reps, double gamma,
                            int rmax, std::uint64_t seed, int max_threads = 0);

/// Grid file: {"configs": [{"dgp": "gaussian_factors", "N": 100, ...}]} or a
/// bare array. Omitted fields keep their defaults.
std::vector<DgpConfig> grid_from_json(const std::string& text);
std::vector<DgpConfig> load_grid(const std::string& path);

/// Fixed-column CSV of a sweep: parameters, signal and noise shares, mean
/// selected counts, match probabilities, spanning R2.
std::string sweep_csv(const std::vector<SweepRow>& rows);

} // namespace factorkit
