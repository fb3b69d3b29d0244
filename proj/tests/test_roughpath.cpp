#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <roughwz/errors.hpp>
#include <roughwz/roughpath.hpp>
#include <roughwz/tensor.hpp>

#include "oracles.hpp"

using namespace roughwz;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double scale_of(const LevelTensors& x) {
    double s = 1.0;
    for (int k = 1; k <= x.level(); ++k) s = std::max(s, x.norm(k));
    return s;
}

}  // namespace

TEST_CASE("single segment closed form") {
    const std::vector<double> v{1.5, -2.0};
    SamplePath p(TimeGrid::uniform(1), 2, {0.0, 0.0, 1.5, -2.0});
    const auto lift = lift_piecewise_linear(p, 3);
    const auto x = lift.increment(0, 1);
    for (std::size_t a = 0; a < 2; ++a) {
        CHECK(x.at(1)[a] == doctest::Approx(v[a]));
        for (std::size_t b = 0; b < 2; ++b) {
            CHECK(x.at(2)[a * 2 + b] == doctest::Approx(v[a] * v[b] / 2.0));
            for (std::size_t c = 0; c < 2; ++c) CHECK(x.at(3)[(a * 2 + b) * 2 + c] == doctest::Approx(v[a] * v[b] * v[c] / 6.0));
        }
    }
    const auto empty = lift.increment(1, 1);
    for (double e : empty.data()) CHECK(e == 0.0);
    CHECK_THROWS_AS(lift_piecewise_linear(p, 4), ConfigError);
    CHECK_THROWS_AS(lift_piecewise_linear(p, 0), ConfigError);
}

TEST_CASE("levy area of the L-shaped path") {
    SamplePath p(TimeGrid({0.0, 0.5, 1.0}), 2, {0.0, 0.0, 1.0, 0.0, 1.0, 1.0});
    const auto x2 = lift_piecewise_linear(p, 2).increment(0, 2).at(2);
    const double area = 0.5 * (x2[1] - x2[2]);
    CHECK(std::abs(area) == doctest::Approx(0.5));
    CHECK(x2[1] == doctest::Approx(1.0));
    CHECK(x2[2] == doctest::Approx(0.0));
}

TEST_CASE("chen composition basics") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> d1{g(rng), g(rng), g(rng)}, d2{g(rng), g(rng), g(rng)}, d3{g(rng), g(rng), g(rng)};
    const auto a = LevelTensors::segment(d1, 3), b = LevelTensors::segment(d2, 3), c = LevelTensors::segment(d3, 3);
    const LevelTensors zero(3, 3);
    CHECK(max_abs_diff(chen_compose(zero, a).data(), a.data()) == 0.0);
    CHECK(max_abs_diff(chen_compose(a, zero).data(), a.data()) == 0.0);
    const auto ab = chen_compose(a, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ab.at(1)[i] == doctest::Approx(d1[i] + d2[i]));
    const auto left = chen_compose(chen_compose(a, b), c);
    const auto right = chen_compose(a, chen_compose(b, c));
    CHECK(max_abs_diff(left.data(), right.data()) <= 1e-14 * scale_of(left));
    CHECK_THROWS_AS(chen_compose(a, LevelTensors(2, 3)), ConfigError);
    CHECK_THROWS_AS(chen_compose(a, LevelTensors(3, 2)), ConfigError);
    auto inplace = a;
    inplace.append_segment(d2);
    CHECK(max_abs_diff(inplace.data(), ab.data()) <= 1e-15 * scale_of(ab));
}

TEST_CASE("lift agrees with exact polynomial iterated integrals") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + trial % 3, n = 1 + static_cast<std::size_t>(trial) % 6;
        const auto path = oracle::random_path(rng, n, d);
        const auto lift = lift_piecewise_linear(path, 3);
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = i; j <= n; ++j) {
                const auto sig = oracle::signature(path, i, j, 3);
                const auto x = lift.increment(i, j);
                for (int k = 1; k <= 3; ++k) {
                    const auto ws = oracle::words(d, k);
                    for (std::size_t w = 0; w < ws.size(); ++w)
                        CHECK(std::abs(x.at(k)[w] - sig.at(ws[w])) <= 1e-12 * (1.0 + std::abs(sig.at(ws[w]))));
                }
            }
    }
}

TEST_CASE("chen identity and shuffle relation on random lifts") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 2 + trial % 3, n = 6 + static_cast<std::size_t>(trial);
        const auto lift = lift_piecewise_linear(oracle::random_path(rng, n, d), 3);
        for (std::size_t s = 0; s <= n; ++s)
            for (std::size_t u = s; u <= n; ++u)
                for (std::size_t t = u; t <= n; ++t) {
                    const auto whole = lift.increment(s, t);
                    const auto composed = chen_compose(lift.increment(s, u), lift.increment(u, t));
                    CHECK(max_abs_diff(whole.data(), composed.data()) <= 1e-12 * scale_of(whole));
                }
        for (std::size_t s = 0; s <= n; ++s)
            for (std::size_t t = s; t <= n; ++t) {
                const auto x = lift.increment(s, t);
                const auto x1 = x.at(1), x2 = x.at(2);
                double r = 0.0;
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b < d; ++b)
                        r = std::max(r, std::abs(0.5 * (x2[a * d + b] + x2[b * d + a]) - 0.5 * x1[a] * x1[b]));
                CHECK(r <= 1e-12 * scale_of(x));
            }
    }
}

TEST_CASE("p-variation on simple paths") {
    SamplePath mono(TimeGrid::uniform(4), 1, {0.0, 0.3, 0.4, 1.0, 2.0});
    const auto lm = lift_piecewise_linear(mono, 1);
    for (double q : {1.0, 1.5, 2.0, 3.0}) CHECK(pvar_seminorm(lm, 1, q) == doctest::Approx(2.0));
    CHECK(pvar_seminorm(lm, 1, 2.0, window_at(lm.grid(), 0.25, 0.75)) == doctest::Approx(0.7));
    SamplePath zig(TimeGrid::uniform(2), 1, {0.0, 1.0, 0.0});
    CHECK(pvar_seminorm(lift_piecewise_linear(zig, 1), 1, 1.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(window_at(lm.grid(), 0.1, 0.5), ConfigError);
    CHECK_THROWS_AS(pvar_seminorm(lm, 1, 0.5), ConfigError);
}

TEST_CASE("p-variation DP equals exhaustive enumeration") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t d = 1 + trial % 3, n = 7;
        const auto path = oracle::random_path(rng, n, d);
        const auto lift = lift_piecewise_linear(path, 3);
        for (int k = 1; k <= 3; ++k) {
            const double q = 2.5 / k + (k == 3 ? 1.0 : 0.0);
            for (std::size_t a = 0; a <= n; ++a)
                for (std::size_t b = a; b <= n; ++b) {
                    auto cost = [&](std::size_t i, std::size_t j) {
                        return std::pow(oracle::level_norm(oracle::signature(path, i, j, k), d, k), q);
                    };
                    const double brute = std::pow(oracle::brute_pvar_power(cost, a, b), 1.0 / q);
                    CHECK(pvar_seminorm(lift, k, q, Window{a, b}) == doctest::Approx(brute).epsilon(1e-12));
                }
        }
    }
}

TEST_CASE("homogeneous norm and distance") {
    std::mt19937_64 rng(31);
    const auto pa = oracle::random_path(rng, 7, 2), pb = oracle::random_path(rng, 7, 2);
    const auto a = lift_piecewise_linear(pa, 2, 3.0);
    CHECK(homogeneous_pvar_norm(lift_piecewise_linear(SamplePath(pa.grid(), 2), 2), 3.0) == 0.0);
    const auto a1 = lift_piecewise_linear(pa, 1);
    CHECK(homogeneous_pvar_norm(a1, 2.5) == doctest::Approx(pvar_seminorm(a1, 1, 2.5)));
    const double expect = std::pow(std::pow(pvar_seminorm(a, 1, 3.0), 3.0) + std::pow(pvar_seminorm(a, 2, 1.5), 1.5), 1.0 / 3.0);
    CHECK(homogeneous_pvar_norm(a, 3.0) == doctest::Approx(expect).epsilon(1e-13));
    CHECK_THROWS_AS(homogeneous_pvar_norm(lift_piecewise_linear(pa, 3), 2.5), ConfigError);

    // the lift of pb on the same grid
    const auto b = lift_piecewise_linear(SamplePath(pa.grid(), 2, std::vector<double>(pb.values().begin(), pb.values().end())), 2, 3.0);
    CHECK(pvar_distance(a, a, 3.0) == 0.0);
    CHECK(pvar_distance(a, b, 3.0) == doctest::Approx(pvar_distance(b, a, 3.0)).epsilon(1e-14));
    double brute = 0.0;
    for (int k = 1; k <= 2; ++k) {
        const double q = 3.0 / k;
        auto cost = [&](std::size_t i, std::size_t j) {
            const auto sa = oracle::signature(pa, i, j, k);
            const auto sb = oracle::signature(SamplePath(pa.grid(), 2, std::vector<double>(pb.values().begin(), pb.values().end())), i, j, k);
            double s = 0.0;
            for (const auto& w : oracle::words(2, k)) s += (sa.at(w) - sb.at(w)) * (sa.at(w) - sb.at(w));
            return std::pow(std::sqrt(s), q);
        };
        brute = std::max(brute, std::pow(oracle::brute_pvar_power(cost, 0, 7), 1.0 / q));
    }
    CHECK(pvar_distance(a, b, 3.0) == doctest::Approx(brute).epsilon(1e-12));
    CHECK_THROWS_AS(pvar_distance(a, lift_piecewise_linear(pa, 1, 3.0), 3.0), ConfigError);
    CHECK_THROWS_AS(pvar_distance(a, lift_piecewise_linear(oracle::random_path(rng, 7, 2), 2, 3.0), 3.0), ConfigError);
}

TEST_CASE("triangle inequality and window monotonicity") {
    std::mt19937_64 rng(41);
    const TimeGrid g = TimeGrid::uniform(9);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<RoughPathLevels> lifts;
        for (int i = 0; i < 3; ++i) {
            const auto p = oracle::random_path(rng, 9, 2, true);
            lifts.push_back(lift_piecewise_linear(p, 2, 2.5));
        }
        const double ab = pvar_distance(lifts[0], lifts[1], 2.5), bc = pvar_distance(lifts[1], lifts[2], 2.5),
                     ac = pvar_distance(lifts[0], lifts[2], 2.5);
        CHECK(ac <= ab + bc + 1e-10);
        for (std::size_t s = 0; s <= 9; ++s)
            for (std::size_t u = s; u <= 9; ++u)
                for (std::size_t t = u; t <= 9; ++t) {
                    const double q = 2.0;
                    const double su = std::pow(pvar_seminorm(lifts[0], 1, q, {s, u}), q);
                    const double ut = std::pow(pvar_seminorm(lifts[0], 1, q, {u, t}), q);
                    const double st = std::pow(pvar_seminorm(lifts[0], 1, q, {s, t}), q);
                    CHECK(su + ut <= st + 1e-10);
                    CHECK(pvar_seminorm(lifts[0], 1, q, {s, u}) <= pvar_seminorm(lifts[0], 1, q, {s, t}) + 1e-12);
                }
    }
}

TEST_CASE("intrinsic control is superadditive") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const auto lift = lift_piecewise_linear(oracle::random_path(rng, 10, 2), 2, 2.5);
        const auto omega = intrinsic_control(lift, 2.5);
        CHECK(omega.superadditivity_defect() <= 1e-10);
        for (std::size_t i = 0; i <= 10; ++i) CHECK(omega(i, i) == 0.0);
        CHECK(omega(0, 10) == doctest::Approx(std::pow(homogeneous_pvar_norm(lift, 2.5), 2.5)));
    }
}

TEST_CASE("n-functional") {
    // total control below beta: one block
    SamplePath small(TimeGrid::uniform(4), 1, {0.0, 0.1, 0.2, 0.3, 0.4});
    const auto ls = lift_piecewise_linear(small, 1);
    auto r = n_functional(ls, 2.0, 1.0);
    CHECK(r.count == 0);
    CHECK(r.breakpoints == std::vector<double>{0.0, 1.0});
    CHECK_THROWS_AS(n_functional(ls, 2.0, 0.0), ConfigError);

    // unit-speed scalar path, omega(s, t) = (t - s)^2: with beta = 0.26 a
    // block needs length >= 0.51, so one full block then a partial one
    SamplePath unit(TimeGrid::uniform(100), 1, [] {
        std::vector<double> v;
        for (int i = 0; i <= 100; ++i) v.push_back(i / 100.0);
        return v;
    }());
    const auto lu = lift_piecewise_linear(unit, 1);
    r = n_functional(lu, 2.0, 0.26);
    CHECK(r.count == 1);
    REQUIRE(r.breakpoints.size() == 3);
    CHECK(r.breakpoints[1] == doctest::Approx(0.51));
    // equality at a node counts as reaching beta
    r = n_functional(lu, 2.0, 0.25);
    CHECK(r.count == 1);
    CHECK(r.breakpoints[1] == doctest::Approx(0.5));
    r = n_functional(lu, 2.0, 0.01);
    CHECK(r.count == 9);

    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        const auto path = oracle::random_path(rng, 12, 2, true, 0.6);
        const auto lift = lift_piecewise_linear(path, 2, 2.5);
        const double total = std::pow(homogeneous_pvar_norm(lift, 2.5), 2.5);
        std::size_t prev = std::numeric_limits<std::size_t>::max();
        for (double beta : {0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
            const auto n = n_functional(lift, 2.5, beta).count;
            CHECK(n <= static_cast<std::size_t>(std::floor(total / beta)));
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("level-1 p-variation is unchanged by interior refinement") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        const auto path = oracle::random_path(rng, 6, 2, true);
        const auto fine = refine_piecewise_linear(path, TimeGrid::uniform(24));
        const auto a = lift_piecewise_linear(path, 1), b = lift_piecewise_linear(fine, 1);
        for (std::size_t s = 0; s <= 6; ++s)
            for (std::size_t t = s; t <= 6; ++t)
                for (double q : {1.0, 2.0, 3.5})
                    CHECK(pvar_seminorm(b, 1, q, {4 * s, 4 * t}) ==
                          doctest::Approx(pvar_seminorm(a, 1, q, {s, t})).epsilon(1e-12));
    }
}

TEST_CASE("dilation") {
    SamplePath p(TimeGrid::uniform(1), 2, {0.0, 0.0, 1.0, 2.0});
    const auto lift = lift_piecewise_linear(p, 2);
    const auto same = dilate(lift, 1.0);
    CHECK(max_abs_diff(same.segment(0).data(), lift.segment(0).data()) == 0.0);
    const auto twice = dilate(lift, 2.0);
    const auto x = twice.increment(0, 1);
    CHECK(x.at(1)[1] == doctest::Approx(4.0));
    CHECK(x.at(2)[1] == doctest::Approx(4.0));  // 2^2 * (1 * 2 / 2)

    std::mt19937_64 rng(71);
    const auto q = lift_piecewise_linear(oracle::random_path(rng, 5, 2), 3);
    Eigen::MatrixXd A(3, 2), B(2, 3);
    A << 1, 2, -1, 0.5, 0.3, 0.7;
    B << 0.2, -1, 1, 0.4, 0.0, 2;
    const auto composed = dilate(dilate(q, A), B);
    const auto direct = dilate(q, Eigen::MatrixXd(B * A));
    for (std::size_t j = 0; j < 5; ++j)
        CHECK(max_abs_diff(composed.segment(j).data(), direct.segment(j).data()) <= 1e-12);
    CHECK_THROWS_AS(dilate(q, B), ConfigError);
    // dilating the path and lifting agree
    const auto path = oracle::random_path(rng, 4, 2);
    std::vector<double> mapped;
    for (std::size_t i = 0; i < path.grid().nodes(); ++i)
        for (int r2 = 0; r2 < 3; ++r2) mapped.push_back(A(r2, 0) * path(i, 0) + A(r2, 1) * path(i, 1));
    const auto lifted = lift_piecewise_linear(SamplePath(path.grid(), 3, mapped), 3);
    const auto dl = dilate(lift_piecewise_linear(path, 3), A);
    CHECK(max_abs_diff(lifted.increment(0, 4).data(), dl.increment(0, 4).data()) <= 1e-12);
}

TEST_CASE("level-3 consistency") {
    // linear path: the extension sum omits sum delta^{(x)3}/6 = v^{(x)3}/(6 n^2)
    SamplePath line(TimeGrid::uniform(1), 2, {0.0, 0.0, 0.6, -0.8});
    const auto res = level3_residuals(line, 6);
    for (std::size_t i = 0; i < res.size(); ++i) {
        const double n = std::pow(2.0, static_cast<double>(i));
        CHECK(res[i] == doctest::Approx(1.0 / (6.0 * n * n)).epsilon(1e-12));
    }
    SamplePath two(TimeGrid({0.0, 0.5, 1.0}), 2, {0.0, 0.0, 1.0, 0.3, 0.4, 1.2});
    const auto r2 = level3_residuals(two, 10);
    CHECK(r2.back() < 1e-6);
    for (std::size_t i = 1; i < r2.size(); ++i) CHECK(r2[i] < r2[i - 1]);
    CHECK(level3_consistency_check(SamplePath(TimeGrid::uniform(3), 2)) == 0.0);
    CHECK_THROWS_AS(level3_residuals(SamplePath(TimeGrid::uniform(65), 1), 2), ConfigError);
}

TEST_CASE("lift export") {
    SamplePath p(TimeGrid::uniform(1), 2, {0.0, 0.0, 1.0, 2.0});
    std::ostringstream os;
    write_lift_csv(os, lift_piecewise_linear(p, 2));
    const auto s = os.str();
    CHECK(s.find("interval,level,multi_index,value") == 0);
    CHECK(s.find("0,2,1.2,1\n") != std::string::npos);
    CHECK(s.find("0,1,2,2\n") != std::string::npos);
}
