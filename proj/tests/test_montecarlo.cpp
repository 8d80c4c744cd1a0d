#include <doctest.h>

#include "factorkit/errors.hpp"
#include "factorkit/montecarlo.hpp"
#include "factorkit/rng.hpp"

#include "test_utils.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

using namespace factorkit;

namespace {

DgpConfig base_config(Dgp dgp, std::uint64_t seed) {
    DgpConfig c;
    c.dgp = dgp;
    c.N = 100;
    c.T = 100;
    c.r = 5;
    c.seed = seed;
    return c;
}

} // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("seeded generation is reproducible and shapes line up") {
    const DgpConfig c = base_config(Dgp::gaussian_factors, 31);
    const auto [p1, t1] = generate(c);
    const auto [p2, t2] = generate(c);
    CHECK(p1.values == p2.values);
    CHECK(t1.F0 == t2.F0);
    CHECK(p1.T() == 100);
    CHECK(p1.N() == 100);
    CHECK(t1.F0.cols() == 5);
    CHECK(t1.S.cwiseAbs().maxCoeff() == 0.0); // outliers off by default
    CHECK(testutil::max_abs(p1.values - (t1.C0 + t1.e + t1.S)) == 0.0);

    DgpConfig other = c;
    other.seed = 32;
    const auto [p3, t3] = generate(other);
    CHECK(p3.values != p1.values);
}

TEST_CASE("fixed-spectrum signal has exactly the ladder proportions") {
    DgpConfig c = base_config(Dgp::fixed_spectrum, 33);
    const auto [panel, truth] = generate(c);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(truth.C0);
    const Eigen::VectorXd d = svd.singularValues();
    Eigen::VectorXd ladder(5);
    ladder << 1.0, 0.8, 0.5, 0.3, 0.2;
    const Eigen::VectorXd want = ladder / ladder.norm();
    const Eigen::VectorXd got = d.head(5) / d.head(5).norm();
    CHECK(testutil::max_abs(got - want) < 1e-10);
    CHECK(d(5) < 1e-8 * d(0)); // exact rank five

    // theta rescales only the last rung.
    c.theta = 0.5;
    const auto [panel2, truth2] = generate(c);
    Eigen::BDCSVD<Eigen::MatrixXd> svd2(truth2.C0);
    const Eigen::VectorXd d2 = svd2.singularValues();
    CHECK(d2(4) / d2(0) == doctest::Approx(0.1).epsilon(1e-8));
}

TEST_CASE("outlier block respects the configured footprint") {
    DgpConfig c = base_config(Dgp::gaussian_factors, 34);
    c.outliers_on = true;
    c.kappa_units = 0.10;
    c.kappa_periods = 0.03;
    const auto [panel, truth] = generate(c);

    int dirty_units = 0;
    for (int i = 0; i < 100; ++i)
        if (truth.S.col(i).cwiseAbs().maxCoeff() > 0.0)
            ++dirty_units;
    CHECK(dirty_units == 10); // ceil(0.10 * 100)
    int dirty_cells = 0;
    for (int t = 0; t < 100; ++t)
        for (int i = 0; i < 100; ++i)
            if (truth.S(t, i) != 0.0)
                ++dirty_cells;
    CHECK(dirty_cells == 10 * 3); // shared periods across contaminated units

    DgpConfig per = c;
    per.per_unit_periods = true;
    const auto [panel2, truth2] = generate(per);
    int cells2 = 0;
    for (int t = 0; t < 100; ++t)
        for (int i = 0; i < 100; ++i)
            if (truth2.S(t, i) != 0.0)
                ++cells2;
    CHECK(cells2 == 30); // same budget, independently placed per unit
}

TEST_CASE("evaluate reports the documented shares for the fixed spectrum") {
    DgpConfig c = base_config(Dgp::fixed_spectrum, 35);
    const auto [panel, truth] = generate(c);
    const SimMetrics m = evaluate(panel, truth, 0.05, 8);

    // Shares within the signal are exactly ladder^2 / sum(ladder^2):
    // 0.495, 0.317, 0.124, 0.0446, 0.0198. Three of them clear 0.05.
    CHECK(m.r_star == 3);
    CHECK(m.C_r_smallest == doctest::Approx(0.04 / 2.02).epsilon(1e-9));
    CHECK(m.c_S == 0.0);
    CHECK(m.C_r_total > 0.60);
    CHECK(m.C_r_total < 0.75);
    CHECK(m.r_bar <= m.r_hat);
    REQUIRE(m.R2_hat.has_value());
    REQUIRE(m.R2_bar.has_value());
    CHECK(*m.R2_bar > 0.85); // conservative pick spans the three big factors
}

TEST_CASE("evaluate on a strong-factor panel finds all five") {
    DgpConfig c = base_config(Dgp::gaussian_factors, 36);
    const auto [panel, truth] = generate(c);
    const SimMetrics m = evaluate(panel, truth, 0.05, 8);
    CHECK(m.r_star == 5);
    CHECK(m.r_hat == 5);
    CHECK(m.r_bar == 5);
    CHECK(*m.R2_hat > 0.90);
    CHECK(m.C_r_total == doctest::Approx(0.83).epsilon(0.03));
}

TEST_CASE("a pure signal panel is spanned perfectly") {
    DgpConfig c = base_config(Dgp::gaussian_factors, 37);
    auto [panel, truth] = generate(c);
    // Mean-free factors keep the column space intact through standardization,
    // so the selected directions must lie exactly inside the signal span.
    truth.F0.rowwise() -= truth.F0.colwise().mean();
    truth.C0 = truth.F0 * truth.Lambda0.transpose();
    truth.e.setZero();
    panel.values = truth.C0;
    const SimMetrics m = evaluate(panel, truth, 0.05, 8);
    CHECK(m.r_star == 5);
    CHECK(m.r_hat == 5);
    CHECK(std::abs(*m.R2_hat - 1.0) < 1e-8);
    CHECK(std::abs(*m.R2_bar - 1.0) < 1e-8);
    CHECK(m.C_r_total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("contamination share rises with the outlier scale") {
    double prev = 0.0;
    for (const double omega : {5.0, 10.0, 20.0}) {
        DgpConfig c = base_config(Dgp::gaussian_factors, 38);
        c.outliers_on = true;
        c.omega = omega;
        const auto [panel, truth] = generate(c);
        const SimMetrics m = evaluate(panel, truth, 0.05, 8);
        CHECK(m.c_S > prev);
        prev = m.c_S;
    }
    CHECK(prev > 0.10); // omega = 20 contaminates heavily
    CHECK(prev < 0.25);
}

TEST_CASE("single-replication sweep is evaluate under the derived seed") {
    DgpConfig c = base_config(Dgp::gaussian_factors, 0);
    c.N = 60;
    c.T = 60;
    c.r = 3;
    const std::uint64_t sweep_seed = 77;
    const std::vector<SweepRow> rows = sweep({c}, 1, 0.05, 8, sweep_seed, 1);
    REQUIRE(rows.size() == 1);

    DgpConfig solo = c;
    solo.seed = derive_seed(sweep_seed, 0, 0);
    const auto [panel, truth] = generate(solo);
    const SimMetrics m = evaluate(panel, truth, 0.05, 8);
    CHECK(rows[0].reps == 1);
    CHECK(rows[0].mean_r_hat == doctest::Approx(m.r_hat).epsilon(1e-14));
    CHECK(rows[0].mean_r_bar == doctest::Approx(m.r_bar).epsilon(1e-14));
    CHECK(rows[0].mean_c_S == doctest::Approx(m.c_S).epsilon(1e-14));
    CHECK(rows[0].mean_C_r_total == doctest::Approx(m.C_r_total).epsilon(1e-14));
}

TEST_CASE("worker count never changes the numbers") {
    DgpConfig a = base_config(Dgp::gaussian_factors, 0);
    a.N = 50;
    a.T = 50;
    a.r = 2;
    DgpConfig b = a;
    b.dgp = Dgp::fixed_spectrum;
    b.r = 5;
    b.outliers_on = true;

    const std::vector<SweepRow> serial = sweep({a, b}, 6, 0.05, 6, 123, 1);
    const std::vector<SweepRow> parallel = sweep({a, b}, 6, 0.05, 6, 123, 4);
    CHECK(sweep_csv(serial) == sweep_csv(parallel));
    REQUIRE(parallel.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(serial[i].mean_r_hat == parallel[i].mean_r_hat);
        CHECK(serial[i].mean_C_r_total == parallel[i].mean_C_r_total);
        CHECK(serial[i].mean_c_S == parallel[i].mean_c_S);
        CHECK(serial[i].prob_r_bar_eq_r == parallel[i].prob_r_bar_eq_r);
    }

    // The cap can also arrive via the environment.
    setenv("FACTORKIT_THREADS", "3", 1);
    const std::vector<SweepRow> env_cap = sweep({a, b}, 6, 0.05, 6, 123, 0);
    unsetenv("FACTORKIT_THREADS");
    CHECK(sweep_csv(env_cap) == sweep_csv(serial));
}

TEST_CASE("csv table has the fixed header and one row per configuration") {
    DgpConfig c = base_config(Dgp::gaussian_factors, 0);
    c.N = 40;
    c.T = 40;
    c.r = 2;
    const std::vector<SweepRow> rows = sweep({c}, 2, 0.05, 6, 5, 1);
    const std::string csv = sweep_csv(rows);
    CHECK(csv.rfind("dgp,N,T,r,omega,theta,outliers,reps,r_star,C_r,C_smallest,c_S,"
                    "r_hat,r_bar,prob_r_hat_eq_r,prob_r_bar_eq_r,"
                    "prob_r_hat_eq_r_star,prob_r_bar_eq_r_star,R2_hat,R2_bar\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.find("gaussian_factors,40,40,2") != std::string::npos);
}

TEST_CASE("grid json accepts both wrapped and bare arrays with defaults") {
    const std::string wrapped = R"({"configs": [
        {"dgp": "fixed_spectrum", "N": 50, "T": 80, "theta": 0.75},
        {"dgp": "gaussian_factors", "outliers": true, "omega": 10.0}
    ]})";
    const std::vector<DgpConfig> g1 = grid_from_json(wrapped);
    REQUIRE(g1.size() == 2);
    CHECK(g1[0].dgp == Dgp::fixed_spectrum);
    CHECK(g1[0].N == 50);
    CHECK(g1[0].T == 80);
    CHECK(g1[0].theta == 0.75);
    CHECK(g1[0].r == 5); // default
    CHECK(g1[1].outliers_on);
    CHECK(g1[1].omega == 10.0);

    const std::vector<DgpConfig> g2 = grid_from_json(R"([{"N": 30, "T": 30, "r": 2}])");
    REQUIRE(g2.size() == 1);
    CHECK(g2[0].dgp == Dgp::gaussian_factors);

    CHECK_THROWS_AS(grid_from_json("{"), ValidationError);
    CHECK_THROWS_AS(grid_from_json("[]"), ValidationError);
    CHECK_THROWS_AS(grid_from_json(R"([{"dgp": "unknown"}])"), ValidationError);
    CHECK_THROWS_AS(grid_from_json(R"([{"N": 1}])"), ValidationError);
}

TEST_CASE("configuration validation catches impossible setups") {
    DgpConfig c = base_config(Dgp::fixed_spectrum, 0);
    c.r = 6; // the ladder stops at five rungs
    CHECK_THROWS_AS(c.validate(), ValidationError);

    DgpConfig k = base_config(Dgp::gaussian_factors, 0);
    k.outliers_on = true;
    k.kappa_units = 0.0; // no unit would be contaminated
    CHECK_THROWS_AS(k.validate(), ValidationError);

    DgpConfig t = base_config(Dgp::gaussian_factors, 0);
    t.r = 200; // exceeds min(N, T)
    CHECK_THROWS_AS(t.validate(), ValidationError);

    CHECK(std::string(dgp_name(Dgp::fixed_spectrum)) == "fixed_spectrum");
    CHECK(dgp_from_name("gaussian_factors") == Dgp::gaussian_factors);
    CHECK_THROWS_AS(dgp_from_name("dgp3"), ValidationError);
}

} // TEST_SUITE
