#include "factorkit/constraints.hpp"
#include "factorkit/errors.hpp"

#include <json.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <sstream>

namespace factorkit {

namespace {

// Reshape a flat column-major vector of length N*r to an N x r matrix.
Eigen::MatrixXd unvec(const Eigen::VectorXd& v, int n, int r) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, r);
}

Eigen::VectorXd to_vec(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

} // namespace

void RestrictionSet::validate() const {
    if (m == 0)
        return;
    if (N < 1 || r < 1)
        throw ValidationError("restriction set has no panel dimensions");
    if (R.rows() != m || R.cols() != static_cast<long>(N) * r || phi.size() != m)
        throw ValidationError("restriction matrix shape mismatch");
    if (m >= N * r)
        throw ValidationError("need fewer restrictions than free loadings: m = " +
                              std::to_string(m) + ", N*r = " + std::to_string(N * r));
    const Eigen::MatrixXd dense(R);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    const Eigen::VectorXd sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-10 * sv(0))
        throw ValidationError("restrictions are not linearly independent (rank-deficient R)");
}

RestrictionSet restrictions_from_json(const std::string& json_text, int N) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("restriction JSON is malformed: ") + e.what());
    }

    RestrictionSet rs;
    rs.N = N;
    try {
        rs.r = j.at("r").get<int>();
        if (rs.r < 1)
            throw ValidationError("restriction set needs r >= 1");
        const auto& cons = j.at("constraints");
        rs.m = static_cast<int>(cons.size());
        rs.phi.resize(rs.m);
        std::vector<Eigen::Triplet<double>> trip;
        for (int c = 0; c < rs.m; ++c) {
            const auto& entry = cons.at(c);
            rs.phi(c) = entry.at("phi").get<double>();
            for (const auto& term : entry.at("terms")) {
                const int i = term.at("i").get<int>();
                const int jf = term.at("j").get<int>();
                const double coeff = term.at("c").get<double>();
                if (i < 1 || i > N)
                    throw ValidationError("restriction " + std::to_string(c + 1) +
                                          ": series index " + std::to_string(i) +
                                          " outside 1.." + std::to_string(N));
                if (jf < 1 || jf > rs.r)
                    throw ValidationError("restriction " + std::to_string(c + 1) +
                                          ": factor index " + std::to_string(jf) +
                                          " outside 1.." + std::to_string(rs.r));
                if (!std::isfinite(coeff))
                    throw ValidationError("restriction " + std::to_string(c + 1) +
                                          " has a non-finite coefficient");
                trip.emplace_back(c, (jf - 1) * N + (i - 1), coeff);
            }
        }
        rs.R.resize(rs.m, static_cast<long>(N) * rs.r);
        rs.R.setFromTriplets(trip.begin(), trip.end());
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("restriction JSON has unexpected structure: ") +
                              e.what());
    }
    rs.validate();
    return rs;
}

RestrictionSet load_restrictions(const std::string& path, int N) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return restrictions_from_json(buf.str(), N);
}

Eigen::MatrixXd f_update(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Lambda, double gamma) {
    if (Z.cols() != Lambda.rows())
        throw ValidationError("f_update: Z and Lambda dimensions disagree");
    if (!(gamma >= 0.0))
        throw ValidationError("f_update: gamma must be nonnegative");
    const int r = static_cast<int>(Lambda.cols());
    const Eigen::MatrixXd s =
        Lambda.transpose() * Lambda + gamma * Eigen::MatrixXd::Identity(r, r);
    return s.ldlt().solve(Lambda.transpose() * Z.transpose()).transpose();
}

// Shared core: the ridge solution pulled toward {R vec(L) = phi}. With
// inv_tau = 1/tau this is the penalized solution in the numerically stable
// form  L0 - W (inv_tau I + R W)^{-1} (R vec(L0) - phi),  W = K^{-1} R',
// K = (F'F + gamma I) kron I_N; inv_tau = 0 is the exact constrained limit.
namespace {
Eigen::MatrixXd restricted_update(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F,
                                  double gamma, double inv_tau, const RestrictionSet& rs) {
    const int n = static_cast<int>(Z.cols());
    const int r = static_cast<int>(F.cols());
    if (rs.N != n || rs.r != r)
        throw ValidationError("restriction set built for " + std::to_string(rs.N) + " x " +
                              std::to_string(rs.r) + " loadings, data has " + std::to_string(n) +
                              " x " + std::to_string(r));

    const Eigen::MatrixXd s = F.transpose() * F + gamma * Eigen::MatrixXd::Identity(r, r);
    const Eigen::LDLT<Eigen::MatrixXd> s_fact(s);
    const Eigen::MatrixXd l0 = s_fact.solve(F.transpose() * Z).transpose();
    if (rs.empty())
        return l0;

    // W = K^{-1} R', one N x r reshape per restriction.
    Eigen::MatrixXd w(static_cast<long>(n) * r, rs.m);
    const Eigen::MatrixXd rt = Eigen::MatrixXd(rs.R).transpose();
    for (int c = 0; c < rs.m; ++c) {
        const Eigen::MatrixXd p = unvec(rt.col(c), n, r);
        w.col(c) = to_vec(s_fact.solve(p.transpose()).transpose());
    }

    Eigen::MatrixXd cap = rs.R * w; // R K^{-1} R', m x m
    cap.diagonal().array() += inv_tau;
    const Eigen::VectorXd violation = rs.R * to_vec(l0) - rs.phi;
    const Eigen::VectorXd correction = cap.ldlt().solve(violation);
    return l0 - unvec(w * correction, n, r);
}
} // namespace

Eigen::MatrixXd lambda_update_penalized(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F,
                                        double gamma, double tau, const RestrictionSet* rs) {
    if (!(gamma >= 0.0) || !(tau >= 0.0))
        throw ValidationError("lambda_update_penalized: gamma and tau must be nonnegative");
    if (rs == nullptr || rs->empty() || tau == 0.0) {
        const int r = static_cast<int>(F.cols());
        const Eigen::MatrixXd s =
            F.transpose() * F + gamma * Eigen::MatrixXd::Identity(r, r);
        return s.ldlt().solve(F.transpose() * Z).transpose();
    }
    return restricted_update(Z, F, gamma, 1.0 / tau, *rs);
}

Eigen::MatrixXd lambda_update_exact(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F,
                                    double gamma, const RestrictionSet& rs) {
    if (!(gamma >= 0.0))
        throw ValidationError("lambda_update_exact: gamma must be nonnegative");
    return restricted_update(Z, F, gamma, 0.0, rs);
}

ConstrainedFit constrained_fit(const ScaledData& z, int r, double gamma,
                               const RestrictionSet& rs, double tol, int max_iters,
                               const SvdOptions& opts) {
    const int mindim = std::min(z.T(), z.N());
    if (r < 1 || r > mindim)
        throw ValidationError("factor count must be in 1.." + std::to_string(mindim));
    if (!rs.empty() && (rs.N != z.N() || rs.r != r))
        throw ValidationError("restriction set dimensions do not match the panel");
    rs.validate();

    const double root_n = std::sqrt(static_cast<double>(z.N()));
    const double root_t = std::sqrt(static_cast<double>(z.T()));

    // Restrictions are stated on panel-unit loadings; the solver works in
    // scaled units, so phi shrinks by sqrt(N).
    RestrictionSet rs_scaled = rs;
    if (!rs.empty())
        rs_scaled.phi = rs.phi / root_n;

    const PartialSvd s = top_k_svd(z.Z, r, opts);
    const Eigen::VectorXd root = soft_threshold(s.d, gamma).cwiseSqrt();
    Eigen::MatrixXd f = s.U * root.asDiagonal();
    Eigen::MatrixXd l = s.V * root.asDiagonal();

    ConstrainedFit out;
    for (int it = 1; it <= max_iters; ++it) {
        const Eigen::MatrixXd l_new = rs.empty()
                                          ? lambda_update_penalized(z.Z, f, gamma, 0.0, nullptr)
                                          : lambda_update_exact(z.Z, f, gamma, rs_scaled);
        const Eigen::MatrixXd f_new = f_update(z.Z, l_new, gamma);
        const double err = (f_new.transpose() * f_new - f.transpose() * f).norm() +
                           (l_new.transpose() * l_new - l.transpose() * l).norm();
        f = f_new;
        l = l_new;
        out.iterations = it;
        if (err <= tol) {
            out.converged = true;
            break;
        }
    }

    FactorFit& fit = out.fit;
    fit.F = root_t * f;
    fit.Lambda = root_n * l;
    fit.d = s.d;
    fit.gamma1 = fit.gamma2 = gamma;
    fit.method = Method::constrained;
    fit.converged = out.converged;
    fit.iterations = out.iterations;
    fit.effective_rank = 0;
    for (int j = 0; j < r; ++j)
        if (fit.F.col(j).norm() > 0.0)
            ++fit.effective_rank;

    if (!rs.empty()) {
        const Eigen::VectorXd gap =
            rs.R * Eigen::Map<const Eigen::VectorXd>(fit.Lambda.data(), fit.Lambda.size()) -
            rs.phi;
        out.constraint_residual = gap.size() > 0 ? gap.cwiseAbs().maxCoeff() : 0.0;
    }
    return out;
}

} // namespace factorkit
