#include <doctest.h>

#include "factorkit/errors.hpp"
#include "factorkit/rng.hpp"
#include "factorkit/selection.hpp"

#include "test_utils.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace factorkit;

namespace {

/// ScaledData with an exactly planted spectrum, unit total energy.
ScaledData planted_spectrum(int T, int N, Eigen::VectorXd head, std::uint64_t seed) {
    const int mindim = std::min(T, N);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(mindim);
    d.head(head.size()) = head;
    const double used = head.squaredNorm();
    REQUIRE(used < 1.0);
    const int rest = mindim - static_cast<int>(head.size());
    const double fill = std::sqrt((1.0 - used) / rest);
    REQUIRE(fill < head(head.size() - 1)); // keep the ordering strict
    d.tail(rest).setConstant(fill);

    Rng rng(seed);
    Eigen::HouseholderQR<Eigen::MatrixXd> qa(rng.gaussian(T, mindim));
    Eigen::HouseholderQR<Eigen::MatrixXd> qb(rng.gaussian(N, mindim));
    const Eigen::MatrixXd Qa = qa.householderQ() * Eigen::MatrixXd::Identity(T, mindim);
    const Eigen::MatrixXd Qb = qb.householderQ() * Eigen::MatrixXd::Identity(N, mindim);
    ScaledData z;
    z.Z = Qa * d.asDiagonal() * Qb.transpose();
    z.scale = std::sqrt(static_cast<double>(T) * static_cast<double>(N));
    return z;
}

} // namespace

TEST_SUITE("selection") {

TEST_CASE("penalty closed form and monotonicity") {
    CHECK(penalty_g(100, 100) == doctest::Approx(0.02 * std::log(50.0)).epsilon(1e-14));
    CHECK(penalty_g(100, 100) == doctest::Approx(0.0782404601).epsilon(1e-8));
    CHECK(penalty_g(50, 400) ==
          doctest::Approx((450.0 / 20000.0) * std::log(20000.0 / 450.0)).epsilon(1e-14));
    CHECK(penalty_g(200, 100) == penalty_g(100, 200)); // symmetric in N and T
    for (int n = 10; n < 500; n *= 2)
        CHECK(penalty_g(2 * n, 2 * n) < penalty_g(n, n)); // (2/N) log(N/2) decreases
    CHECK_THROWS_AS(penalty_g(1, 100), ValidationError);
}

TEST_CASE("ssr curves match explicit reconstruction residuals") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(50, 40, 3, 0.8, 401));
    const int rmax = 6;
    const double gamma = 0.05;
    const SsrCurves c = ssr_curves(z, rmax, gamma);

    Eigen::MatrixXd U, V;
    Eigen::VectorXd d;
    testutil::dense_svd(z.Z, U, d, V);
    CHECK(c.plain(0) == 1.0);
    CHECK(c.thresh(0) == 1.0);
    for (int k = 1; k <= rmax; ++k) {
        const Eigen::MatrixXd hat =
            U.leftCols(k) * d.head(k).asDiagonal() * V.leftCols(k).transpose();
        CHECK(c.plain(k) == doctest::Approx((z.Z - hat).squaredNorm()).epsilon(1e-9));
        double kept = 0.0;
        for (int j = 0; j < k; ++j)
            kept += std::pow(std::max(d(j) - gamma, 0.0), 2);
        CHECK(c.thresh(k) == doctest::Approx(1.0 - kept).epsilon(1e-12));
    }
}

TEST_CASE("curve invariants: ordering, monotone gap, gamma edge cases") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(60, 45, 4, 1.0, 402));
    const SelectionResult sel = select(z, 8, 0.05);
    for (int k = 1; k <= 8; ++k) {
        CHECK(sel.ssr_plain(k) <= sel.ssr_plain(k - 1));
        CHECK(sel.ssr_thresh(k) <= sel.ssr_thresh(k - 1));
        CHECK(sel.ssr_thresh(k) >= sel.ssr_plain(k));
    }
    const IcGap gap = ic_gap_decomposition(sel);
    for (int k = 1; k <= 8; ++k)
        CHECK(gap.exact(k) >= gap.exact(k - 1) - 1e-14);

    const SelectionResult zero = select(z, 8, 0.0);
    CHECK(testutil::max_abs(zero.ssr_plain - zero.ssr_thresh) == 0.0);
    CHECK(zero.r_hat == zero.r_bar);
    CHECK(testutil::max_abs(ic_gap_decomposition(zero).exact) == 0.0);

    // Penalty above every singular value: nothing survives thresholding.
    const SelectionResult all = select(z, 8, 2.0);
    for (int k = 0; k <= 8; ++k)
        CHECK(all.ssr_thresh(k) == 1.0);
    CHECK(all.r_bar == 0); // flat criterion plus k*g, tie kept at zero
}

TEST_CASE("planted two-value spectrum reproduces the worked arithmetic") {
    Eigen::VectorXd head(2);
    head << 0.4, 0.2;
    const ScaledData z = planted_spectrum(40, 30, head, 403);
    const SsrCurves c = ssr_curves(z, 2, 0.05);
    CHECK(c.d(0) == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(c.thresh(1) == doctest::Approx(1.0 - 0.1225).epsilon(1e-9)); // (0.4-0.05)^2
    CHECK(c.plain(1) == doctest::Approx(0.84).epsilon(1e-9));

    const SelectionResult sel = select(z, 2, 0.05);
    const IcGap gap = ic_gap_decomposition(sel);
    CHECK(gap.exact(1) == doctest::Approx(std::log(0.8775 / 0.84)).epsilon(1e-8));
    // First order approximation: gamma*(2 d1 - gamma)/ssr_plain.
    CHECK(gap.approx(1) == doctest::Approx(0.05 * (2.0 * 0.4 - 0.05) / 0.84).epsilon(1e-7));
}

TEST_CASE("approximation tracks the exact gap when gamma is small") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(80, 60, 3, 0.7, 404));
    const SelectionResult sel = select(z, 5, 1e-3);
    const IcGap gap = ic_gap_decomposition(sel);
    // exact = log(1 + x) for the linearized x = approx, so the approximation
    // overshoots by at most x^2 / 2.
    for (int k = 0; k <= 5; ++k) {
        CHECK(gap.exact(k) >= -1e-12);
        CHECK(gap.exact(k) <= gap.approx(k) + 1e-12);
        CHECK(gap.approx(k) - gap.exact(k) <=
              0.5 * gap.approx(k) * gap.approx(k) + 1e-12);
    }
}

TEST_CASE("strong planted factors are selected by both criteria") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(100, 100, 3, 1.0, 405));
    const SelectionResult sel = select(z, 8, 0.05);
    CHECK(sel.r_hat == 3);
    CHECK(sel.r_bar == 3);
}

TEST_CASE("noiseless exact-rank data floors the SSR instead of diverging") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(40, 30, 2, 0.0, 406));
    const SelectionResult sel = select(z, 5, 0.05);
    CHECK(sel.floored);
    for (int k = 0; k <= 5; ++k) {
        CHECK(std::isfinite(sel.ic_plain(k)));
        CHECK(std::isfinite(sel.ic_thresh(k)));
    }
    CHECK(sel.r_hat == 2);
    CHECK(sel.r_bar == 2);
}

TEST_CASE("conservative criterion never exceeds the plain one") {
    std::vector<double> gammas{0.02, 0.05, 0.1};
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        const int T = 30 + static_cast<int>(seed % 4) * 20;
        const int N = 25 + static_cast<int>(seed % 3) * 25;
        const int r = 1 + static_cast<int>(seed % 5);
        const double noise = 0.3 + 0.4 * static_cast<double>(seed % 3);
        const ScaledData z = testutil::scaled(testutil::noisy_panel(T, N, r, noise, seed));
        for (const double g : gammas) {
            const SelectionResult sel = select(z, 8, g);
            REQUIRE(sel.r_bar <= sel.r_hat);
            ++checked;
        }
    }
    CHECK(checked == 180);
}

TEST_CASE("selection ignores the order of the series") {
    const Panel p = testutil::noisy_panel(50, 30, 3, 0.8, 407);
    Panel shuffled = p;
    std::vector<int> perm(p.N());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937 g(408);
    std::shuffle(perm.begin(), perm.end(), g);
    for (int i = 0; i < p.N(); ++i) {
        shuffled.values.col(i) = p.values.col(perm[i]);
        shuffled.series_names[i] = p.series_names[perm[i]];
    }
    const SelectionResult a = select(testutil::scaled(p), 6, 0.05);
    const SelectionResult b = select(testutil::scaled(shuffled), 6, 0.05);
    CHECK(a.r_hat == b.r_hat);
    CHECK(a.r_bar == b.r_bar);
    CHECK(testutil::max_abs(a.ssr_plain - b.ssr_plain) < 1e-10);
}

TEST_CASE("rank bound and norm preconditions are enforced") {
    const ScaledData z = testutil::scaled(testutil::noisy_panel(20, 10, 2, 0.5, 409));
    CHECK_THROWS_AS(ssr_curves(z, 0, 0.05), ValidationError);
    CHECK_THROWS_AS(ssr_curves(z, 10, 0.05), ValidationError);
    CHECK_THROWS_AS(ssr_curves(z, 3, -0.01), ValidationError);

    ScaledData bad = z;
    bad.Z *= 2.0; // breaks the unit-energy precondition
    CHECK_THROWS_AS(ssr_curves(bad, 3, 0.05), ValidationError);
}

} // TEST_SUITE
