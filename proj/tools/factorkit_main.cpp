#include "factorkit/constraints.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/estimators.hpp"
#include "factorkit/imputation.hpp"
#include "factorkit/inference.hpp"
#include "factorkit/montecarlo.hpp"
#include "factorkit/panel.hpp"
#include "factorkit/selection.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace factorkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNonConvergence = 3;

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void emit_error(const std::string& kind, const std::string& message) {
    ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << "\n";
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("cannot write '" + path.string() + "'");
    out << content;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c)
            out += ',';
        out += header[c];
    }
    out += '\n';
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c)
                out += ',';
            out += fmt_full(m(t, c));
        }
        out += '\n';
    }
    return out;
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(t, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json vector_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        arr.push_back(v(i));
    return arr;
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (int j = 1; j <= n; ++j)
        names.push_back(prefix + std::to_string(j));
    return names;
}

void write_matrix(const fs::path& dir, const std::string& stem, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& header, const std::string& format) {
    if (format == "json") {
        ordered_json j;
        j["columns"] = header;
        j["rows"] = matrix_json(m);
        write_text(dir / (stem + ".json"), j.dump(2) + "\n");
    } else {
        write_text(dir / (stem + ".csv"), matrix_csv(m, header));
    }
}

struct PanelArgs {
    std::string input;
    std::string transform_codes;
    std::string variance = "population";
};

void add_panel_flags(CLI::App* cmd, PanelArgs& args) {
    cmd->add_option("--input", args.input, "panel CSV, header row of series names")
        ->required();
    cmd->add_option("--transform-codes", args.transform_codes,
                    "sidecar CSV of (series, code) pairs applied before estimation");
    cmd->add_option("--variance", args.variance, "standardization variance convention")
        ->check(CLI::IsMember({"population", "sample"}));
}

Panel load_panel(const PanelArgs& args) {
    Panel panel = ingest_csv(args.input);
    if (!args.transform_codes.empty()) {
        load_transform_codes(panel, args.transform_codes);
        panel = apply_transforms(panel);
    }
    return panel;
}

VarianceConvention convention(const PanelArgs& args) {
    return args.variance == "sample" ? VarianceConvention::sample
                                     : VarianceConvention::population;
}

fs::path prepare_output(const std::string& output) {
    fs::path dir(output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw ValidationError("cannot create output directory '" + output + "'");
    return dir;
}

ordered_json standardization_json(const StandardizationInfo& info) {
    ordered_json j;
    j["convention"] =
        info.convention == VarianceConvention::population ? "population" : "sample";
    j["means"] = vector_json(info.means);
    j["sds"] = vector_json(info.sds);
    return j;
}

ordered_json fit_summary(const FactorFit& fit, const Panel& panel,
                         const StandardizationInfo& info) {
    ordered_json j;
    j["schema"] = 1;
    j["method"] = method_name(fit.method);
    j["T"] = fit.T();
    j["N"] = fit.N();
    j["r_requested"] = fit.r();
    j["r_star"] = fit.effective_rank;
    if (fit.method == Method::rpc_general) {
        j["gamma1"] = fit.gamma1;
        j["gamma2"] = fit.gamma2;
    } else if (fit.method != Method::apc && fit.method != Method::pc) {
        j["gamma"] = fit.gamma1;
    }
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["singular_values"] = vector_json(fit.d);

    double gamma_eff = 0.0;
    if (fit.method == Method::rpc || fit.method == Method::constrained)
        gamma_eff = fit.gamma1;
    else if (fit.method == Method::rpc_general)
        gamma_eff = std::sqrt(fit.gamma1 * fit.gamma2);
    ordered_json contributions = ordered_json::array();
    for (int jf = 0; jf < fit.r(); ++jf) {
        const double dj = fit.d(jf);
        const double tj = std::max(dj - gamma_eff, 0.0);
        ordered_json row;
        row["factor"] = jf + 1;
        row["d2"] = dj * dj;
        row["d2_thresholded"] = tj * tj;
        contributions.push_back(std::move(row));
    }
    j["contributions"] = contributions;
    j["effective_content"] = static_cast<int>((fit.d.array() > 1e-8).count());
    j["series"] = panel.series_names;
    j["standardization"] = standardization_json(info);
    return j;
}

void write_fit(const fs::path& dir, const FactorFit& fit, const std::string& format) {
    const int k = fit.effective_rank;
    write_matrix(dir, "factors", fit.F.leftCols(k), numbered("f", k), format);
    write_matrix(dir, "loadings", fit.Lambda.leftCols(k), numbered("f", k), format);
}

Eigen::VectorXd load_vector(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "'");
    std::vector<double> vals;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos)
            continue;
        const auto last = line.find_last_not_of(" \t");
        const std::string tok = line.substr(first, last - first + 1);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
            if (lineno == 1 && vals.empty())
                continue; // header line
            throw ValidationError("line " + std::to_string(lineno) + " of '" + path +
                                  "': cannot parse '" + tok + "'");
        }
        vals.push_back(v);
    }
    if (vals.empty())
        throw ValidationError("'" + path + "' holds no numeric rows");
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

struct CommandResult {
    int exit_code = kExitOk;
};

int run_estimate(const PanelArgs& pargs, const std::string& output, const std::string& method,
                 double gamma, bool gamma_given, std::optional<double> gamma1,
                 std::optional<double> gamma2, int r, std::uint64_t seed,
                 const std::string& format) {
    const Panel panel = load_panel(pargs);
    const auto [std_panel, info] = standardize(panel, convention(pargs));
    const ScaledData z = scale(std_panel);
    SvdOptions opts;
    opts.seed = seed;

    if (gamma1.has_value() != gamma2.has_value())
        throw ValidationError("--gamma1 and --gamma2 must be given together");

    FactorFit fit;
    if (gamma1) {
        if (method != "rpc")
            throw ValidationError("--gamma1/--gamma2 apply to method rpc only");
        fit = rpc_general(z, r, *gamma1, *gamma2, opts);
    } else if (method == "apc") {
        fit = apc(z, r, opts);
    } else if (method == "pc") {
        fit = pc(z, r, opts);
    } else {
        fit = rpc_closed_form(z, r, gamma, opts);
    }
    if ((method == "apc" || method == "pc") && gamma_given)
        std::cerr << "warning: --gamma is ignored for method " << method << "\n";

    const fs::path dir = prepare_output(output);
    write_fit(dir, fit, format);
    ordered_json summary = fit_summary(fit, panel, info);
    summary["command"] = "estimate";
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

int run_select(const PanelArgs& pargs, const std::string& output, int rmax, double gamma,
               std::uint64_t seed, const std::string& format) {
    const Panel panel = load_panel(pargs);
    const auto [std_panel, info] = standardize(panel, convention(pargs));
    const ScaledData z = scale(std_panel);

    Eigen::MatrixXd table(rmax + 1, 7);
    int r_hat = 0, r_bar = 0;
    bool floored = false;
    Eigen::VectorXd d(0);
    if (rmax == 0) {
        // k = 0 is the only candidate: no decomposition is needed and both
        // criteria degenerate to log(1) = 0.
        table << 0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0;
    } else {
        SvdOptions opts;
        opts.seed = seed;
        const SelectionResult sel = select(z, rmax, gamma, opts);
        const IcGap gap = ic_gap_decomposition(sel);
        for (int k = 0; k <= rmax; ++k) {
            table(k, 0) = k;
            table(k, 1) = sel.ssr_plain(k);
            table(k, 2) = sel.ssr_thresh(k);
            table(k, 3) = sel.ic_plain(k);
            table(k, 4) = sel.ic_thresh(k);
            table(k, 5) = gap.exact(k);
            table(k, 6) = gap.approx(k);
        }
        r_hat = sel.r_hat;
        r_bar = sel.r_bar;
        floored = sel.floored;
        d = sel.d;
    }
    const fs::path dir = prepare_output(output);
    write_matrix(dir, "selection", table,
                 {"k", "ssr", "ssr_thresholded", "ic", "ic_thresholded", "ic_gap",
                  "ic_gap_approx"},
                 format);

    ordered_json summary;
    summary["schema"] = 1;
    summary["command"] = "select";
    summary["T"] = z.T();
    summary["N"] = z.N();
    summary["rmax"] = rmax;
    summary["gamma"] = gamma;
    summary["penalty"] = penalty_g(z.N(), z.T());
    summary["r_hat"] = r_hat;
    summary["r_bar"] = r_bar;
    summary["ssr_floored"] = floored;
    summary["singular_values"] = vector_json(d);
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

int run_constrain(const PanelArgs& pargs, const std::string& output,
                  const std::string& restrictions, std::optional<int> r, double gamma,
                  std::uint64_t seed, const std::string& format) {
    const Panel panel = load_panel(pargs);
    const auto [std_panel, info] = standardize(panel, convention(pargs));
    const ScaledData z = scale(std_panel);
    const RestrictionSet rs = load_restrictions(restrictions, z.N());
    if (r && *r != rs.r)
        throw ValidationError("--r " + std::to_string(*r) + " conflicts with r = " +
                              std::to_string(rs.r) + " in the restriction file");
    SvdOptions opts;
    opts.seed = seed;
    // The alternation routinely needs thousands of sweeps on realistic
    // restriction sets; each sweep is cheap, so the budget is generous.
    const ConstrainedFit cf = constrained_fit(z, rs.r, gamma, rs, 1e-8, 20000, opts);

    const fs::path dir = prepare_output(output);
    write_fit(dir, cf.fit, format);
    ordered_json summary = fit_summary(cf.fit, panel, info);
    summary["command"] = "constrain";
    summary["gamma"] = gamma;
    summary["restrictions"] = rs.m;
    summary["constraint_residual"] = cf.constraint_residual;
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    if (!cf.converged) {
        emit_error("non_convergence", "constrained solver hit the iteration cap; "
                                      "outputs were written with converged=false");
        return kExitNonConvergence;
    }
    return kExitOk;
}

int run_impute(const PanelArgs& pargs, const std::string& output, int k, int rmax,
               double gamma, std::uint64_t seed, const std::string& format) {
    const Panel panel = load_panel(pargs);
    SvdOptions opts;
    opts.seed = seed;
    const ImputationResult res = k > 0 ? em_impute(panel, k, 1e-6, 500, opts)
                                       : em_impute_auto(panel, rmax, gamma, 1e-6, 500, opts);

    const fs::path dir = prepare_output(output);
    std::vector<std::string> header = res.completed.series_names;
    if (header.empty())
        header = numbered("x", res.completed.N());
    write_matrix(dir, "completed", res.completed.values, header, format);

    ordered_json summary;
    summary["schema"] = 1;
    summary["command"] = "impute";
    summary["T"] = res.completed.T();
    summary["N"] = res.completed.N();
    summary["k"] = res.k;
    summary["iterations"] = res.iterations;
    summary["converged"] = res.converged;
    summary["delta_history"] = res.delta_history;
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    if (!res.converged) {
        emit_error("non_convergence", "imputation hit the iteration cap; "
                                      "outputs were written with converged=false");
        return kExitNonConvergence;
    }
    return kExitOk;
}

int run_simulate(const std::string& input, const std::string& output, int reps, double gamma,
                 int rmax, std::uint64_t seed, int threads) {
    const std::vector<DgpConfig> grid = load_grid(input);
    const std::vector<SweepRow> rows = sweep(grid, reps, gamma, rmax, seed, threads);

    const fs::path dir = prepare_output(output);
    write_text(dir / "table.csv", sweep_csv(rows));

    ordered_json summary;
    summary["schema"] = 1;
    summary["command"] = "simulate";
    summary["configs"] = grid.size();
    summary["reps"] = reps;
    summary["gamma"] = gamma;
    summary["rmax"] = rmax;
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

int run_regress(const PanelArgs& pargs, const std::string& output, const std::string& target,
                const std::string& method, double gamma, int r, double kappa,
                std::uint64_t seed, const std::string& format) {
    const Panel panel = load_panel(pargs);
    const auto [std_panel, info] = standardize(panel, convention(pargs));
    const ScaledData z = scale(std_panel);
    SvdOptions opts;
    opts.seed = seed;

    FactorFit fit;
    if (method == "apc")
        fit = apc(z, r, opts);
    else if (method == "pc")
        fit = pc(z, r, opts);
    else
        fit = rpc_closed_form(z, r, gamma, opts);

    const Eigen::VectorXd y = load_vector(target);
    if (y.size() != fit.T())
        throw ValidationError("target has " + std::to_string(y.size()) +
                              " rows but the panel has " + std::to_string(fit.T()) +
                              " periods");
    const RegressionResult rr = regress(y, fit, kappa);

    const int k = static_cast<int>(rr.retained.size());
    Eigen::MatrixXd table(k, 3);
    for (int c = 0; c < k; ++c) {
        table(c, 0) = rr.retained[c] + 1;
        table(c, 1) = rr.coef_ols(c);
        table(c, 2) = rr.coef_ridge(c);
    }
    const fs::path dir = prepare_output(output);
    write_matrix(dir, "coefficients", table, {"factor", "coef_ols", "coef_ridge"}, format);

    const double tss = (y.array() - y.mean()).matrix().squaredNorm();
    const double rss = (y - rr.fitted_ols).squaredNorm();
    ordered_json summary;
    summary["schema"] = 1;
    summary["command"] = "regress";
    summary["method"] = method_name(fit.method);
    summary["r"] = r;
    summary["retained"] = k;
    summary["kappa"] = kappa;
    summary["r2_ols"] = tss > 0.0 ? 1.0 - rss / tss : 0.0;
    summary["seed"] = seed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"factorkit: large-panel factor estimation, rank selection, "
                 "restrictions, imputation and simulation"};
    app.require_subcommand(1);

    // estimate
    auto* est = app.add_subcommand("estimate", "fit factors and loadings");
    PanelArgs est_panel;
    add_panel_flags(est, est_panel);
    std::string est_output, est_method = "rpc", est_format = "csv";
    double est_gamma = 0.05;
    std::optional<double> est_gamma1, est_gamma2;
    int est_r = 0;
    std::uint64_t est_seed = 0;
    est->add_option("--output", est_output, "output directory")->required();
    est->add_option("--method", est_method, "estimator")
        ->check(CLI::IsMember({"apc", "pc", "rpc"}));
    auto* est_gamma_opt = est->add_option("--gamma", est_gamma, "singular value threshold");
    est->add_option("--gamma1", est_gamma1, "factor-side ridge penalty");
    est->add_option("--gamma2", est_gamma2, "loading-side ridge penalty");
    est->add_option("--r", est_r, "number of factors")->required()->check(CLI::PositiveNumber);
    est->add_option("--seed", est_seed, "decomposition seed");
    est->add_option("--format", est_format, "matrix output format")
        ->check(CLI::IsMember({"csv", "json"}));

    // select
    auto* sel = app.add_subcommand("select", "pick the number of factors");
    PanelArgs sel_panel;
    add_panel_flags(sel, sel_panel);
    std::string sel_output, sel_format = "csv";
    int sel_rmax = 8;
    double sel_gamma = 0.05;
    std::uint64_t sel_seed = 0;
    sel->add_option("--output", sel_output, "output directory")->required();
    sel->add_option("--rmax", sel_rmax, "largest rank considered; 0 keeps only k = 0")
        ->check(CLI::NonNegativeNumber);
    sel->add_option("--gamma", sel_gamma, "singular value threshold");
    sel->add_option("--seed", sel_seed, "decomposition seed");
    sel->add_option("--format", sel_format, "table output format")
        ->check(CLI::IsMember({"csv", "json"}));

    // constrain
    auto* con = app.add_subcommand("constrain", "fit under linear loading restrictions");
    PanelArgs con_panel;
    add_panel_flags(con, con_panel);
    std::string con_output, con_restrictions, con_format = "csv";
    std::optional<int> con_r;
    double con_gamma = 0.05;
    std::uint64_t con_seed = 0;
    con->add_option("--output", con_output, "output directory")->required();
    con->add_option("--restrictions", con_restrictions, "restriction JSON file")->required();
    con->add_option("--r", con_r, "number of factors (must match the file)");
    con->add_option("--gamma", con_gamma, "ridge penalty");
    con->add_option("--seed", con_seed, "decomposition seed");
    con->add_option("--format", con_format, "matrix output format")
        ->check(CLI::IsMember({"csv", "json"}));

    // impute
    auto* imp = app.add_subcommand("impute", "fill missing cells from the factor structure");
    PanelArgs imp_panel;
    add_panel_flags(imp, imp_panel);
    std::string imp_output, imp_format = "csv";
    int imp_k = 0, imp_rmax = 8;
    double imp_gamma = 0.05;
    std::uint64_t imp_seed = 0;
    imp->add_option("--output", imp_output, "output directory")->required();
    imp->add_option("--k", imp_k, "factor count; 0 selects it from the complete rows");
    imp->add_option("--rmax", imp_rmax, "largest rank considered when k = 0")
        ->check(CLI::PositiveNumber);
    imp->add_option("--gamma", imp_gamma, "threshold used when k = 0");
    imp->add_option("--seed", imp_seed, "decomposition seed");
    imp->add_option("--format", imp_format, "matrix output format")
        ->check(CLI::IsMember({"csv", "json"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "replication sweep over a config grid");
    std::string sim_input, sim_output;
    int sim_reps = 200, sim_rmax = 8, sim_threads = 0;
    double sim_gamma = 0.05;
    std::uint64_t sim_seed = 0;
    sim->add_option("--input", sim_input, "grid JSON file")->required();
    sim->add_option("--output", sim_output, "output directory")->required();
    sim->add_option("--reps", sim_reps, "replications per configuration")
        ->check(CLI::PositiveNumber);
    sim->add_option("--gamma", sim_gamma, "selection threshold");
    sim->add_option("--rmax", sim_rmax, "largest rank considered")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "sweep seed");
    sim->add_option("--threads", sim_threads,
                    "worker cap; 0 reads FACTORKIT_THREADS or the hardware count");

    // regress
    auto* reg = app.add_subcommand("regress", "regress a target series on estimated factors");
    PanelArgs reg_panel;
    add_panel_flags(reg, reg_panel);
    std::string reg_output, reg_target, reg_method = "rpc", reg_format = "csv";
    double reg_gamma = 0.05, reg_kappa = 0.0;
    int reg_r = 0;
    std::uint64_t reg_seed = 0;
    reg->add_option("--output", reg_output, "output directory")->required();
    reg->add_option("--target", reg_target, "CSV/text file with one value per period")
        ->required();
    reg->add_option("--method", reg_method, "estimator")
        ->check(CLI::IsMember({"apc", "pc", "rpc"}));
    reg->add_option("--gamma", reg_gamma, "singular value threshold");
    reg->add_option("--r", reg_r, "number of factors")->required()->check(CLI::PositiveNumber);
    reg->add_option("--kappa", reg_kappa, "ridge penalty on the regression");
    reg->add_option("--seed", reg_seed, "decomposition seed");
    reg->add_option("--format", reg_format, "table output format")
        ->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e); // help and version requests
        emit_error("validation", e.what());
        return kExitValidation;
    }

    try {
        if (est->parsed())
            return run_estimate(est_panel, est_output, est_method, est_gamma,
                                est_gamma_opt->count() > 0, est_gamma1, est_gamma2, est_r,
                                est_seed, est_format);
        if (sel->parsed())
            return run_select(sel_panel, sel_output, sel_rmax, sel_gamma, sel_seed, sel_format);
        if (con->parsed())
            return run_constrain(con_panel, con_output, con_restrictions, con_r, con_gamma,
                                 con_seed, con_format);
        if (imp->parsed())
            return run_impute(imp_panel, imp_output, imp_k, imp_rmax, imp_gamma, imp_seed,
                              imp_format);
        if (sim->parsed())
            return run_simulate(sim_input, sim_output, sim_reps, sim_gamma, sim_rmax, sim_seed,
                                sim_threads);
        if (reg->parsed())
            return run_regress(reg_panel, reg_output, reg_target, reg_method, reg_gamma, reg_r,
                               reg_kappa, reg_seed, reg_format);
    } catch (const ValidationError& e) {
        emit_error("validation", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 1;
    }
    return kExitOk;
}
