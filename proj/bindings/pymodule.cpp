// Python bindings. Every entry point takes the raw panel as a numpy array,
// standardizes it internally (population convention, matching the library
// default) and reports estimates in standardized units together with the
// per-series means and sds needed to undo that.

#include "factorkit/constraints.hpp"
#include "factorkit/errors.hpp"
#include "factorkit/estimators.hpp"
#include "factorkit/imputation.hpp"
#include "factorkit/inference.hpp"
#include "factorkit/montecarlo.hpp"
#include "factorkit/panel.hpp"
#include "factorkit/selection.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>

namespace py = pybind11;
using namespace factorkit;

namespace {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

Panel build_panel(const Eigen::MatrixXd& values, const std::optional<BoolArray>& mask) {
    Panel p;
    p.values = values;
    p.mask = mask ? *mask : BoolArray(values.array().isFinite());
    p.series_names.reserve(values.cols());
    for (int i = 0; i < values.cols(); ++i)
        p.series_names.push_back("x" + std::to_string(i + 1));
    return p;
}

VarianceConvention convention_from(const std::string& name) {
    if (name == "population")
        return VarianceConvention::population;
    if (name == "sample")
        return VarianceConvention::sample;
    throw ValidationError("unknown variance convention: " + name);
}

struct Prepared {
    ScaledData z;
    StandardizationInfo info;
};

Prepared prepare(const Eigen::MatrixXd& values) {
    const auto [sp, info] = standardize(build_panel(values, std::nullopt));
    return {scale(sp), info};
}

FactorFit dispatch_fit(const ScaledData& z, int r, const std::string& method, double gamma,
                       double gamma1, double gamma2, bool iterative) {
    if (method == "apc")
        return apc(z, r);
    if (method == "pc")
        return pc(z, r);
    if (method == "rpc")
        return iterative ? algorithm_rpc(z, r, gamma) : rpc_closed_form(z, r, gamma);
    if (method == "rpc_general")
        return rpc_general(z, r, gamma1, gamma2);
    throw ValidationError("unknown method: " + method);
}

py::dict fit_dict(const FactorFit& fit, const StandardizationInfo& info) {
    py::dict d;
    d["F"] = fit.F;
    d["loadings"] = fit.Lambda;
    d["d"] = fit.d;
    d["method"] = method_name(fit.method);
    d["gamma"] = fit.gamma();
    d["effective_rank"] = fit.effective_rank;
    d["converged"] = fit.converged;
    d["iterations"] = fit.iterations;
    d["means"] = info.means;
    d["sds"] = info.sds;
    return d;
}

py::dict py_standardize(const Eigen::MatrixXd& values, const std::string& convention) {
    const auto [sp, info] = standardize(build_panel(values, std::nullopt),
                                        convention_from(convention));
    py::dict d;
    d["values"] = sp.values;
    d["means"] = info.means;
    d["sds"] = info.sds;
    return d;
}

py::dict py_fit(const Eigen::MatrixXd& values, int r, const std::string& method, double gamma,
                double gamma1, double gamma2, bool iterative) {
    const Prepared prep = prepare(values);
    return fit_dict(dispatch_fit(prep.z, r, method, gamma, gamma1, gamma2, iterative),
                    prep.info);
}

py::dict py_select(const Eigen::MatrixXd& values, int rmax, double gamma) {
    const Prepared prep = prepare(values);
    const SelectionResult sel = select(prep.z, rmax, gamma);
    py::dict d;
    d["r_hat"] = sel.r_hat;
    d["r_bar"] = sel.r_bar;
    d["ssr"] = sel.ssr_plain;
    d["ssr_thresholded"] = sel.ssr_thresh;
    d["ic"] = sel.ic_plain;
    d["ic_thresholded"] = sel.ic_thresh;
    d["d"] = sel.d;
    d["penalty"] = sel.penalty;
    d["floored"] = sel.floored;
    return d;
}

py::dict py_constrained_fit(const Eigen::MatrixXd& values, const std::string& restrictions,
                            double gamma) {
    const Prepared prep = prepare(values);
    const RestrictionSet rs =
        restrictions_from_json(restrictions, static_cast<int>(values.cols()));
    const ConstrainedFit cf = constrained_fit(prep.z, rs.r, gamma, rs);
    py::dict d = fit_dict(cf.fit, prep.info);
    d["constraint_residual"] = cf.constraint_residual;
    d["converged"] = cf.converged;
    d["iterations"] = cf.iterations;
    d["restrictions"] = rs.m;
    return d;
}

py::dict py_impute(const Eigen::MatrixXd& values, const std::optional<BoolArray>& mask,
                   std::optional<int> k, int rmax, double gamma, double tol, int max_iter) {
    const Panel p = build_panel(values, mask);
    const ImputationResult res = k ? em_impute(p, *k, tol, max_iter)
                                   : em_impute_auto(p, rmax, gamma, tol, max_iter);
    py::dict d;
    d["completed"] = res.completed.values;
    d["k"] = res.k;
    d["iterations"] = res.iterations;
    d["converged"] = res.converged;
    d["delta_history"] = res.delta_history;
    return d;
}

py::dict py_simulate(const std::string& dgp, int N, int T, int r, double omega, double mu,
                     double kappa_units, double kappa_periods, double theta, bool outliers,
                     bool per_unit_periods, std::uint64_t seed) {
    DgpConfig c;
    c.dgp = dgp_from_name(dgp);
    c.N = N;
    c.T = T;
    c.r = r;
    c.omega = omega;
    c.mu = mu;
    c.kappa_units = kappa_units;
    c.kappa_periods = kappa_periods;
    c.theta = theta;
    c.outliers_on = outliers;
    c.per_unit_periods = per_unit_periods;
    c.seed = seed;
    const auto [panel, truth] = generate(c);
    py::dict d;
    d["values"] = panel.values;
    d["F0"] = truth.F0;
    d["loadings0"] = truth.Lambda0;
    d["C0"] = truth.C0;
    d["outliers"] = truth.S;
    return d;
}

std::string py_sweep(const std::string& grid_json, int reps, double gamma, int rmax,
                     std::uint64_t seed, int threads) {
    return sweep_csv(sweep(grid_from_json(grid_json), reps, gamma, rmax, seed, threads));
}

py::dict py_interval(const Eigen::MatrixXd& values, int r, int i, int t, double gamma,
                     int hac_lags, double level) {
    const Prepared prep = prepare(values);
    const FactorFit fit = gamma > 0.0 ? rpc_closed_form(prep.z, r, gamma) : pc(prep.z, r);
    const AvarEstimates av = avar(fit, prep.z, i, t, hac_lags);
    const CommonComponentCi ci = common_component_ci(fit, av, i, t, level);
    py::dict d;
    d["estimate"] = ci.estimate;
    d["bias"] = ci.bias;
    d["corrected"] = ci.corrected;
    d["half_width"] = ci.half_width;
    d["lower"] = ci.lower;
    d["upper"] = ci.upper;
    d["level"] = ci.level;
    d["avar_F"] = av.avar_F_t;
    d["avar_loadings"] = av.avar_Lambda_i;
    d["avar_common"] = av.A_C_it;
    d["lags"] = av.lags;
    d["retained"] = av.retained;
    return d;
}

py::dict py_regress(const Eigen::MatrixXd& values, const Eigen::VectorXd& target, int r,
                    const std::string& method, double gamma, double kappa) {
    const Prepared prep = prepare(values);
    const FactorFit fit = dispatch_fit(prep.z, r, method, gamma, 0.0, 0.0, false);
    const RegressionResult res = regress(target, fit, kappa);
    py::dict d;
    d["coef_ols"] = res.coef_ols;
    d["coef_ridge"] = res.coef_ridge;
    d["fitted_ols"] = res.fitted_ols;
    d["retained"] = res.retained;
    d["kappa"] = res.kappa;
    return d;
}

} // namespace

PYBIND11_MODULE(_factorkit, m) {
    m.doc() = "Principal-component and ridge-shrunk estimation of large factor models";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("standardize", &py_standardize, py::arg("values"),
          py::arg("convention") = "population",
          "Demean each series and divide by its standard deviation.");

    m.def("fit", &py_fit, py::arg("values"), py::arg("r"), py::arg("method") = "rpc",
          py::arg("gamma") = 0.05, py::arg("gamma1") = 0.0, py::arg("gamma2") = 0.0,
          py::arg("iterative") = false,
          "Estimate r factors and loadings; method is one of apc, pc, rpc, rpc_general.");

    m.def("select", &py_select, py::arg("values"), py::arg("rmax") = 8,
          py::arg("gamma") = 0.05,
          "Choose the factor count by information criterion, plain and thresholded.");

    m.def("constrained_fit", &py_constrained_fit, py::arg("values"), py::arg("restrictions"),
          py::arg("gamma") = 0.05,
          "Ridge factor fit under exact linear loading restrictions (JSON text).");

    m.def("impute", &py_impute, py::arg("values"), py::arg("mask") = py::none(),
          py::arg("k") = py::none(), py::arg("rmax") = 8, py::arg("gamma") = 0.05,
          py::arg("tol") = 1e-6, py::arg("max_iter") = 500,
          "Fill missing cells (NaN, or mask=False) by iterated factor reconstruction.");

    m.def("simulate", &py_simulate, py::arg("dgp") = "gaussian_factors", py::arg("N") = 100,
          py::arg("T") = 100, py::arg("r") = 5, py::arg("omega") = 5.0, py::arg("mu") = 5.0,
          py::arg("kappa_units") = 0.10, py::arg("kappa_periods") = 0.03,
          py::arg("theta") = 1.0, py::arg("outliers") = false,
          py::arg("per_unit_periods") = false, py::arg("seed") = 0,
          "Draw one synthetic panel and return it with its ground truth.");

    m.def("sweep", &py_sweep, py::arg("grid"), py::arg("reps"), py::arg("gamma") = 0.05,
          py::arg("rmax") = 8, py::arg("seed") = 0, py::arg("threads") = 0,
          "Run a replication study over a JSON config grid; returns the summary CSV.");

    m.def("common_component_interval", &py_interval, py::arg("values"), py::arg("r"),
          py::arg("i"), py::arg("t"), py::arg("gamma") = 0.0, py::arg("hac_lags") = -1,
          py::arg("level") = 0.95,
          "Pointwise confidence interval for the common component at (t, i), "
          "bias-corrected when gamma > 0.");

    m.def("regress", &py_regress, py::arg("values"), py::arg("target"), py::arg("r"),
          py::arg("method") = "pc", py::arg("gamma") = 0.05, py::arg("kappa") = 0.0,
          "Regress a target series on estimated factors, with a ridge variant.");
}
