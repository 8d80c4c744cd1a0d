#include "factorkit/montecarlo.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/rng.hpp"
#include "factorkit/selection.hpp"

#include <json.hpp>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace factorkit {

const char* dgp_name(Dgp dgp) {
    return dgp == Dgp::gaussian_factors ? "gaussian_factors" : "fixed_spectrum";
}

Dgp dgp_from_name(const std::string& name) {
    if (name == "gaussian_factors")
        return Dgp::gaussian_factors;
    if (name == "fixed_spectrum")
        return Dgp::fixed_spectrum;
    throw ValidationError("unknown design '" + name +
                          "', expected gaussian_factors or fixed_spectrum");
}

void DgpConfig::validate() const {
    if (N < 2 || T < 2)
        throw ValidationError("panel dimensions must be at least 2");
    if (r < 1 || r > std::min(N, T))
        throw ValidationError("true factor count must be in 1..min(N,T)");
    if (dgp == Dgp::fixed_spectrum && r > 5)
        throw ValidationError("the singular-value ladder defines at most 5 factors");
    if (!(omega >= 0.0))
        throw ValidationError("outlier sd must be nonnegative");
    if (!std::isfinite(mu))
        throw ValidationError("outlier mean must be finite");
    if (!(kappa_units >= 0.0 && kappa_units <= 1.0) ||
        !(kappa_periods >= 0.0 && kappa_periods <= 1.0))
        throw ValidationError("contamination fractions must be in [0, 1]");
    if (!(theta >= 0.0))
        throw ValidationError("theta must be nonnegative");
    if (outliers_on) {
        if (static_cast<int>(std::ceil(kappa_units * N)) < 1)
            throw ValidationError("outliers requested but no series would be contaminated");
        if (static_cast<int>(std::ceil(kappa_periods * T)) < 1)
            throw ValidationError("outliers requested but no periods would be contaminated");
    }
}

std::pair<Panel, SimTruth> generate(const DgpConfig& config) {
    config.validate();
    const int T = config.T;
    const int N = config.N;
    const int r = config.r;
    Rng rng(config.seed);

    SimTruth truth;
    // Draw order is part of the determinism contract: signal, noise, outlier
    // positions, outlier values.
    if (config.dgp == Dgp::gaussian_factors) {
        truth.F0 = rng.gaussian(T, r);
        truth.Lambda0 = rng.gaussian(N, r);
    } else {
        const Eigen::MatrixXd g = rng.gaussian(T, N);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::VectorXd ladder(r);
        const double base[5] = {1.0, 0.8, 0.5, 0.3, 0.2};
        for (int j = 0; j < r; ++j)
            ladder(j) = base[j] * (j == 4 ? config.theta : 1.0);
        // Signal scaled so var(C0) per cell equals the sum of squared ladder
        // values, comparable to unit noise.
        const Eigen::VectorXd root = ladder.cwiseSqrt();
        truth.F0 = std::sqrt(static_cast<double>(T)) * svd.matrixU().leftCols(r) *
                   root.asDiagonal();
        truth.Lambda0 = std::sqrt(static_cast<double>(N)) * svd.matrixV().leftCols(r) *
                        root.asDiagonal();
    }
    truth.C0 = truth.F0 * truth.Lambda0.transpose();
    truth.e = rng.gaussian(T, N);
    truth.S = Eigen::MatrixXd::Zero(T, N);

    if (config.outliers_on) {
        const int nu = static_cast<int>(std::ceil(config.kappa_units * N));
        const int np = static_cast<int>(std::ceil(config.kappa_periods * T));
        const std::vector<int> units = rng.sample(N, nu);
        if (config.per_unit_periods) {
            for (int u : units) {
                const std::vector<int> periods = rng.sample(T, np);
                for (int t : periods)
                    truth.S(t, u) = config.mu + config.omega * rng.normal();
            }
        } else {
            const std::vector<int> periods = rng.sample(T, np);
            for (int u : units)
                for (int t : periods)
                    truth.S(t, u) = config.mu + config.omega * rng.normal();
        }
    }

    Panel panel;
    panel.values = truth.C0 + truth.e + truth.S;
    panel.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, N, true);
    panel.series_names.reserve(N);
    for (int i = 0; i < N; ++i)
        panel.series_names.push_back("x" + std::to_string(i + 1));
    return {std::move(panel), std::move(truth)};
}

namespace {

double entry_variance(const Eigen::MatrixXd& m) {
    const double n = static_cast<double>(m.size());
    const double mean = m.sum() / n;
    return m.squaredNorm() / n - mean * mean;
}

} // namespace

SimMetrics evaluate(const Panel& panel, const SimTruth& truth, double gamma, int rmax,
                    double share_threshold, const SvdOptions& opts) {
    if (!panel.complete())
        throw ValidationError("simulated panels must be fully observed");
    const int T = panel.T();
    const int r = static_cast<int>(truth.F0.cols());
    if (truth.F0.rows() != T || truth.Lambda0.rows() != panel.N())
        throw ValidationError("truth dimensions do not match the panel");

    SimMetrics m;
    const double var_x = entry_variance(panel.values);
    m.C_r_total = entry_variance(truth.C0) / var_x;
    m.c_S = entry_variance(truth.S) / var_x;

    // Spectrum of C0 through thin QR of both low-rank pieces; avoids an
    // svd of the full T x N matrix.
    Eigen::HouseholderQR<Eigen::MatrixXd> qf(truth.F0);
    Eigen::HouseholderQR<Eigen::MatrixXd> ql(truth.Lambda0);
    const Eigen::MatrixXd rf =
        qf.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rl =
        ql.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> small(rf * rl.transpose(),
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd dc = small.singularValues();
    const Eigen::ArrayXd shares = dc.array().square() / dc.squaredNorm();
    for (int j = 0; j < r; ++j)
        if (shares(j) > share_threshold)
            ++m.r_star;
    m.C_r_smallest = shares(r - 1);

    const auto [std_panel, info] = standardize(panel, VarianceConvention::population);
    const ScaledData z = scale(std_panel);
    const SelectionResult sel = select(z, rmax, gamma);
    m.r_hat = sel.r_hat;
    m.r_bar = sel.r_bar;

    if (m.r_hat >= 1 && m.r_star >= 1) {
        const Eigen::MatrixXd q_f =
            qf.householderQ() * Eigen::MatrixXd::Identity(T, r);
        const Eigen::MatrixXd u_star =
            (q_f * small.matrixU()).leftCols(m.r_star);
        const PartialSvd s = top_k_svd(z.Z, m.r_hat, opts);
        const auto spanning_r2 = [&](int col) {
            const Eigen::VectorXd u = s.U.col(col);
            return (u_star.transpose() * u).squaredNorm() / u.squaredNorm();
        };
        m.R2_hat = spanning_r2(m.r_hat - 1);
        if (m.r_bar >= 1)
            m.R2_bar = spanning_r2(m.r_bar - 1);
    }
    return m;
}

std::vector<SweepRow> sweep(const std::vector<DgpConfig>& grid, int reps, double gamma,
                            int rmax, std::uint64_t seed, int max_threads) {
    if (reps < 1)
        throw ValidationError("need at least one replication");
    if (grid.empty())
        throw ValidationError("empty configuration grid");
    for (const auto& c : grid)
        c.validate();

    int threads = max_threads;
    if (threads <= 0) {
        if (const char* env = std::getenv("FACTORKIT_THREADS"))
            threads = std::atoi(env);
        if (threads <= 0)
            threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0)
            threads = 1;
    }
    const std::size_t total = grid.size() * static_cast<std::size_t>(reps);
    threads = static_cast<int>(std::min<std::size_t>(threads, total));

    std::vector<std::vector<SimMetrics>> results(grid.size(),
                                                 std::vector<SimMetrics>(reps));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    const auto worker = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= total)
                return;
            const std::size_t ci = idx / reps;
            const int rep = static_cast<int>(idx % reps);
            try {
                DgpConfig cfg = grid[ci];
                cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(ci),
                                       static_cast<std::uint64_t>(rep));
                const auto [panel, truth] = generate(cfg);
                results[ci][rep] = evaluate(panel, truth, gamma, rmax);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int w = 0; w < threads; ++w)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);

    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        SweepRow row;
        row.config = grid[ci];
        row.reps = reps;
        double r2h_sum = 0.0, r2b_sum = 0.0;
        int r2h_n = 0, r2b_n = 0;
        for (int rep = 0; rep < reps; ++rep) {
            const SimMetrics& m = results[ci][rep];
            row.mean_r_star += m.r_star;
            row.mean_r_hat += m.r_hat;
            row.mean_r_bar += m.r_bar;
            row.prob_r_hat_eq_r += m.r_hat == row.config.r ? 1.0 : 0.0;
            row.prob_r_bar_eq_r += m.r_bar == row.config.r ? 1.0 : 0.0;
            row.prob_r_hat_eq_rstar += m.r_hat == m.r_star ? 1.0 : 0.0;
            row.prob_r_bar_eq_rstar += m.r_bar == m.r_star ? 1.0 : 0.0;
            row.mean_C_r_total += m.C_r_total;
            row.mean_C_r_smallest += m.C_r_smallest;
            row.mean_c_S += m.c_S;
            if (m.R2_hat) {
                r2h_sum += *m.R2_hat;
                ++r2h_n;
            }
            if (m.R2_bar) {
                r2b_sum += *m.R2_bar;
                ++r2b_n;
            }
        }
        const double inv = 1.0 / reps;
        row.mean_r_star *= inv;
        row.mean_r_hat *= inv;
        row.mean_r_bar *= inv;
        row.prob_r_hat_eq_r *= inv;
        row.prob_r_bar_eq_r *= inv;
        row.prob_r_hat_eq_rstar *= inv;
        row.prob_r_bar_eq_rstar *= inv;
        row.mean_C_r_total *= inv;
        row.mean_C_r_smallest *= inv;
        row.mean_c_S *= inv;
        if (r2h_n > 0)
            row.mean_R2_hat = r2h_sum / r2h_n;
        if (r2b_n > 0)
            row.mean_R2_bar = r2b_sum / r2b_n;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DgpConfig> grid_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("grid JSON is malformed: ") + e.what());
    }
    const nlohmann::json* arr = &j;
    if (j.is_object()) {
        if (!j.contains("configs"))
            throw ValidationError("grid JSON object needs a 'configs' array");
        arr = &j.at("configs");
    }
    if (!arr->is_array() || arr->empty())
        throw ValidationError("grid JSON must hold a non-empty array of configurations");

    std::vector<DgpConfig> grid;
    grid.reserve(arr->size());
    try {
        for (const auto& entry : *arr) {
            DgpConfig c;
            if (entry.contains("dgp"))
                c.dgp = dgp_from_name(entry.at("dgp").get<std::string>());
            c.N = entry.value("N", c.N);
            c.T = entry.value("T", c.T);
            c.r = entry.value("r", c.r);
            c.omega = entry.value("omega", c.omega);
            c.mu = entry.value("mu", c.mu);
            c.kappa_units = entry.value("kappa_units", c.kappa_units);
            c.kappa_periods = entry.value("kappa_periods", c.kappa_periods);
            c.theta = entry.value("theta", c.theta);
            c.outliers_on = entry.value("outliers", c.outliers_on);
            c.per_unit_periods = entry.value("per_unit_periods", c.per_unit_periods);
            c.validate();
            grid.push_back(c);
        }
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("grid JSON has unexpected structure: ") + e.what());
    }
    return grid;
}

std::vector<DgpConfig> load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return grid_from_json(buf.str());
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "dgp,N,T,r,omega,theta,outliers,reps,r_star,C_r,C_smallest,c_S,"
        "r_hat,r_bar,prob_r_hat_eq_r,prob_r_bar_eq_r,"
        "prob_r_hat_eq_r_star,prob_r_bar_eq_r_star,R2_hat,R2_bar\n";
    char buf[512];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%s,%d,%d,%d,%.2f,%.2f,%d,%d,%.2f,%.4f,%.4f,%.4f,%.4f,%.4f,"
                      "%.4f,%.4f,%.4f,%.4f",
                      dgp_name(row.config.dgp), row.config.N, row.config.T, row.config.r,
                      row.config.omega, row.config.theta, row.config.outliers_on ? 1 : 0,
                      row.reps, row.mean_r_star, row.mean_C_r_total, row.mean_C_r_smallest,
                      row.mean_c_S, row.mean_r_hat, row.mean_r_bar, row.prob_r_hat_eq_r,
                      row.prob_r_bar_eq_r, row.prob_r_hat_eq_rstar, row.prob_r_bar_eq_rstar);
        out += buf;
        for (const auto& r2 : {row.mean_R2_hat, row.mean_R2_bar}) {
            if (r2) {
                std::snprintf(buf, sizeof(buf), ",%.4f", *r2);
                out += buf;
            } else {
                out += ",";
            }
        }
        out += "\n";
    }
    return out;
}

} // namespace factorkit
