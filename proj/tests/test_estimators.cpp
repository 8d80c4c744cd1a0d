#include <doctest.h>

#include "factorkit/errors.hpp"
#include "factorkit/estimators.hpp"
#include "factorkit/svdcore.hpp"

#include "test_utils.hpp"

#include <cmath>

using namespace factorkit;

namespace {

Eigen::MatrixXd gram_over(const Eigen::MatrixXd& m, double denom) {
    return m.transpose() * m / denom;
}

} // namespace

TEST_SUITE("estimators") {

TEST_CASE("normalization conventions of the three fit families") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(60, 40, 3, 0.7, 201));
    const int r = 5;
    const double gamma = 0.05;

    const FactorFit a = apc(z, r);
    const FactorFit p = pc(z, r);
    const FactorFit q = rpc_closed_form(z, r, gamma);

    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(r, r);
    const Eigen::MatrixXd D = p.d.asDiagonal();
    // apc: orthonormal factors, loadings carry the spectrum twice.
    CHECK(testutil::max_abs(gram_over(a.F, a.T()) - I) < 1e-10);
    CHECK(testutil::max_abs(gram_over(a.Lambda, a.N()) - D * D) < 1e-10);
    // pc: split evenly.
    CHECK(testutil::max_abs(gram_over(p.F, p.T()) - D) < 1e-10);
    CHECK(testutil::max_abs(gram_over(p.Lambda, p.N()) - D) < 1e-10);
    // rpc: split evenly after soft thresholding.
    const Eigen::MatrixXd Dg = soft_threshold(q.d, gamma).asDiagonal();
    CHECK(testutil::max_abs(gram_over(q.F, q.T()) - Dg) < 1e-10);
    CHECK(testutil::max_abs(gram_over(q.Lambda, q.N()) - Dg) < 1e-10);
}

TEST_CASE("apc and pc share one common component") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(45, 30, 2, 0.5, 202));
    const FactorFit a = apc(z, 4);
    const FactorFit p = pc(z, 4);
    const Eigen::MatrixXd ca = common_component(a).C;
    const Eigen::MatrixXd cp = common_component(p).C;
    CHECK(testutil::max_abs(ca - cp) < 1e-10);
}

TEST_CASE("apc loadings are the regression of the panel on the factors") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(50, 35, 3, 0.6, 203));
    const FactorFit a = apc(z, 3);
    const Eigen::MatrixXd X = z.scale * z.Z;
    // F'F/T = I, so the least squares coefficient is X'F/T.
    const Eigen::MatrixXd reg = X.transpose() * a.F / a.T();
    CHECK(testutil::max_abs(reg - a.Lambda) < 1e-8);
}

TEST_CASE("rpc scales the pc fit by the shrink weights columnwise") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(55, 45, 4, 0.8, 204));
    const double gamma = 0.08;
    const FactorFit p = pc(z, 6);
    const FactorFit q = rpc_closed_form(z, 6, gamma);
    const Eigen::VectorXd w = shrink_weights(p.d, gamma);
    CHECK(testutil::max_abs(q.F - p.F * w.asDiagonal()) < 1e-10);
    CHECK(testutil::max_abs(q.Lambda - p.Lambda * w.asDiagonal()) < 1e-10);
}

TEST_CASE("thresholded columns are exact zeros and excluded from the rank") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(40, 30, 2, 0.3, 205));
    // Plant gamma above the noise floor singular values.
    const FactorFit p = pc(z, 5);
    const double gamma = 0.5 * (p.d(1) + p.d(2)); // keeps exactly two columns
    const FactorFit q = rpc_closed_form(z, 5, gamma);
    CHECK(q.effective_rank == 2);
    for (int j = 2; j < 5; ++j) {
        CHECK(q.F.col(j).norm() == 0.0);
        CHECK(q.Lambda.col(j).norm() == 0.0);
    }
    CHECK(q.F.col(0).norm() > 0.0);
}

TEST_CASE("gamma zero collapses rpc onto pc") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(35, 25, 2, 0.4, 206));
    const FactorFit p = pc(z, 4);
    const FactorFit q = rpc_closed_form(z, 4, 0.0);
    CHECK(testutil::max_abs(q.F - p.F) < 1e-12);
    CHECK(testutil::max_abs(q.Lambda - p.Lambda) < 1e-12);
}

TEST_CASE("asymmetric penalties reduce to the geometric mean threshold") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(50, 40, 3, 0.6, 207));
    const double g1 = 0.04, g2 = 0.0025;
    const double gmean = std::sqrt(g1 * g2); // 0.01
    const FactorFit gen = rpc_general(z, 4, g1, g2);
    const FactorFit sym = rpc_closed_form(z, 4, gmean);

    // Common component only sees the geometric mean.
    CHECK(testutil::max_abs(common_component(gen).C - common_component(sym).C) < 1e-10);
    // The asymmetry moves scale between the two blocks: (g2/g1)^{1/4} = 0.5.
    const double ratio = std::pow(g2 / g1, 0.25);
    CHECK(ratio == doctest::Approx(0.5));
    CHECK(testutil::max_abs(gen.F - ratio * sym.F) < 1e-10);
    CHECK(testutil::max_abs(gen.Lambda - sym.Lambda / ratio) < 1e-10);

    const FactorFit same = rpc_general(z, 4, 0.05, 0.05);
    const FactorFit plain = rpc_closed_form(z, 4, 0.05);
    CHECK(testutil::max_abs(same.F - plain.F) < 1e-12);
    CHECK(testutil::max_abs(same.Lambda - plain.Lambda) < 1e-12);
}

TEST_CASE("iterative ridge sweeps land on the closed form") {
    // Two panel shapes, three penalties, fresh seeds throughout.
    int idx = 0;
    for (const auto [t, n] : {std::pair{50, 20}, {120, 80}}) {
        for (const double gamma : {0.0, 0.05, 0.2}) {
            const ScaledData z =
                testutil::scaled(testutil::noisy_panel(t, n, 3, 0.5, 300 + idx));
            const FactorFit direct = rpc_closed_form(z, 4, gamma);
            AlgorithmOptions opts;
            opts.seed = 7000 + idx;
            const FactorFit iter = algorithm_rpc(z, 4, gamma, opts);
            REQUIRE(iter.converged);
            const Eigen::MatrixXd cd = common_component(direct).C;
            const Eigen::MatrixXd ci = common_component(iter).C;
            CHECK((cd - ci).norm() < 1e-8);
            CHECK(iter.effective_rank == direct.effective_rank);
            ++idx;
        }
    }
}

TEST_CASE("sweeps satisfy the ridge stationarity conditions at convergence") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(40, 30, 2, 0.5, 210));
    const double gamma = 0.05;
    AlgorithmOptions opts;
    opts.tol = 1e-12;
    const RidgeSweeps s = rpc_sweeps(z, 3, gamma, opts);
    REQUIRE(s.converged);

    // One more alternating update must not move the product.
    const Eigen::MatrixXd eye = gamma * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd L2 =
        (s.F.transpose() * s.F + eye).ldlt().solve(s.F.transpose() * z.Z).transpose();
    const Eigen::MatrixXd F2 =
        (L2.transpose() * L2 + eye).ldlt().solve(L2.transpose() * z.Z.transpose()).transpose();
    CHECK((F2 * L2.transpose() - s.F * s.Lambda.transpose()).norm() < 1e-7);

    // And the converged product is the singular value thresholding of Z.
    CHECK((s.F * s.Lambda.transpose() - svt(z.Z, 3, gamma)).norm() < 1e-7);
}

TEST_CASE("common component destandardizes back to panel units") {
    const Panel panel = testutil::noisy_panel(30, 20, 2, 0.0, 211); // noiseless
    const auto [stdp, info] = standardize(panel);
    const ScaledData z = scale(stdp);
    const FactorFit p = pc(z, 2);
    const CommonComponent c = common_component(p, info);
    CHECK(testutil::max_abs(c.C - panel.values) < 1e-8);
    CHECK(c.rank == 2);
}

TEST_CASE("rank and penalty arguments are validated") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(20, 10, 2, 0.5, 212));
    CHECK_THROWS_AS(pc(z, 0), ValidationError);
    CHECK_THROWS_AS(pc(z, 11), ValidationError);
    CHECK_THROWS_AS(rpc_closed_form(z, 2, -0.1), ValidationError);
    CHECK_THROWS_AS(rpc_general(z, 2, -0.1, 0.1), ValidationError);
    CHECK_THROWS_AS(rpc_general(z, 2, 0.1, -0.1), ValidationError);
}

} // TEST_SUITE
