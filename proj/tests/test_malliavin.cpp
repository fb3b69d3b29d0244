#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <roughwz/errors.hpp>
#include <roughwz/fbm.hpp>
#include <roughwz/malliavin.hpp>

#include "fd_oracle.hpp"

using namespace roughwz;

namespace {

SamplePath line(std::size_t segments) {
    std::vector<double> v;
    for (std::size_t i = 0; i <= segments; ++i) v.push_back(static_cast<double>(i) / static_cast<double>(segments));
    return SamplePath(TimeGrid::uniform(segments), 1, v);
}

}  // namespace

TEST_CASE("identity model derivatives") {
    const auto m = make_model("identity");
    const auto w = sample_fbm(HurstParameter(0.4), TimeGrid::uniform(16), 1, 2, 1);
    const auto s = solve_driven(*m, w[0]);
    const auto xs = directional_derivatives(*m, s, w[1], 3);
    REQUIRE(xs.size() == 3);
    for (std::size_t i = 0; i <= 16; ++i) {
        CHECK(xs[0].at(i)[0] == doctest::Approx(w[1](i, 0)).epsilon(1e-13));
        CHECK(std::abs(xs[1].at(i)[0]) <= 1e-14);
        CHECK(std::abs(xs[2].at(i)[0]) <= 1e-14);
    }
    CHECK(xs[0].at(0)[0] == 0.0);
}

TEST_CASE("ou first derivative along h_t = t") {
    const auto m = make_model("ou");
    const auto w = sample_fbm(HurstParameter(0.5), TimeGrid::uniform(32), 1, 1, 2).front();
    const auto s = solve_driven(*m, w);
    const auto x = directional_derivative(*m, s, line(32), 1);
    CHECK(x.at(32)[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-10));
    CHECK(x.order == 1);
    // affine: second derivative vanishes
    const auto x2 = directional_derivative(*m, s, line(32), 2);
    CHECK(std::abs(x2.at(32)[0]) <= 1e-14);
}

TEST_CASE("recursion matches finite differences of the solve map") {
    const auto m = make_model("bounded");
    for (std::uint64_t pair = 0; pair < 3; ++pair) {
        const auto paths = sample_fbm(HurstParameter(0.5), TimeGrid::uniform(16), 2, 2, 40 + pair);
        const auto s = solve_driven(*m, paths[0]);
        const auto xs = directional_derivatives(*m, s, paths[1], 3);
        for (int n = 1; n <= 3; ++n) {
            CAPTURE(pair);
            CAPTURE(n);
            const auto c = oracle::compare_with_differences(*m, paths[0], paths[1], n, xs[n - 1].values, s.substeps);
            CHECK(c.relative_error <= 1e-4);
            CHECK(c.observed_order >= 1.8);
        }
    }
}

TEST_CASE("scalar cosine model, third order") {
    const auto m = make_model("cosine", {{"drift", 0.4}});
    const auto paths = sample_fbm(HurstParameter(0.4), TimeGrid::uniform(12), 1, 2, 9);
    const auto s = solve_driven(*m, paths[0]);
    const auto x3 = directional_derivative(*m, s, paths[1], 3);
    const auto c = oracle::compare_with_differences(*m, paths[0], paths[1], 3, x3.values, s.substeps);
    CHECK(c.relative_error <= 1e-4);
    CHECK(c.observed_order >= 1.8);
}

TEST_CASE("first derivative is linear in the direction") {
    const auto m = make_model("bounded");
    const auto paths = sample_fbm(HurstParameter(0.4), TimeGrid::uniform(16), 2, 3, 17);
    const auto s = solve_driven(*m, paths[0]);
    const double a = 0.7, b = -1.3;
    std::vector<double> comb(paths[1].values().size());
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * paths[1].values()[i] + b * paths[2].values()[i];
    const auto xa = directional_derivative(*m, s, paths[1], 1);
    const auto xb = directional_derivative(*m, s, paths[2], 1);
    const auto xc = directional_derivative(*m, s, SamplePath(paths[1].grid(), 2, comb), 1);
    double scale = 0.0, res = 0.0;
    for (std::size_t i = 0; i < xc.values.size(); ++i) {
        scale = std::max(scale, std::abs(xc.values[i]));
        res = std::max(res, std::abs(xc.values[i] - a * xa.values[i] - b * xb.values[i]));
    }
    CHECK(res <= 1e-9 * scale);
}

TEST_CASE("derivative argument checks") {
    const auto m = make_model("bounded");
    const auto w = sample_fbm(HurstParameter(0.5), TimeGrid::uniform(4), 2, 1, 1).front();
    const auto s = solve_driven(*m, w);
    CHECK_THROWS_AS(directional_derivative(*m, s, w, 0), ConfigError);
    CHECK_THROWS_AS(directional_derivative(*m, s, w, 4), ConfigError);
    CHECK_THROWS_AS(directional_derivative(*m, s, SamplePath(TimeGrid::uniform(8), 2), 1), ConfigError);
    SolverOptions o;
    o.with_jacobian = false;
    CHECK_THROWS_AS(directional_derivative(*m, solve_driven(*m, w, o), w, 1), ConfigError);
}

TEST_CASE("covariance of the identity model") {
    const auto m = make_model("identity");
    const auto grid = TimeGrid::uniform(16);
    const auto w = sample_fbm(HurstParameter(0.5), grid, 1, 1, 3).front();
    const auto s = solve_driven(*m, w);
    CHECK(std::abs(malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), grid), 1.0).matrix(0, 0) - 1.0) <= 1e-15);
    CHECK(std::abs(malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), grid), 0.5).matrix(0, 0) - 0.5) <= 1e-15);
    for (double h : {0.3, 0.4}) {
        const auto g = increment_gram(HurstParameter(h), grid);
        CHECK(malliavin_covariance(*m, s, g, 1.0).matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(malliavin_covariance(*m, s, g, 0.25).matrix(0, 0) == doctest::Approx(std::pow(0.25, 2 * h)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), grid), 0.3), ConfigError);
    CHECK_THROWS_AS(malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), TimeGrid::uniform(8)), 1.0), ConfigError);
}

TEST_CASE("constant sigma, zero drift") {
    Eigen::MatrixXd sigma(2, 2);
    sigma << 1.0, 0.5, -0.3, 2.0;
    const auto m = make_model("affine", {{"sigma", {{1.0, 0.5}, {-0.3, 2.0}}}});
    const auto grid = TimeGrid({0.0, 0.2, 0.3, 0.6, 1.0});
    const auto w = sample_fbm(HurstParameter(0.5), grid, 2, 1, 5).front();
    const auto s = solve_driven(*m, w);
    const auto cov = malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), grid), 0.6);
    const Eigen::MatrixXd expect = sigma * sigma.transpose() * 0.6;
    CHECK((cov.matrix - expect).cwiseAbs().maxCoeff() <= 1e-14);
    // refinement by interior nodes changes nothing
    const auto fine_grid = TimeGrid({0.0, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0});
    const auto sf = solve_driven(*m, refine_piecewise_linear(w, fine_grid));
    for (double h : {0.35, 0.5}) {
        const auto c1 = malliavin_covariance(*m, s, increment_gram(HurstParameter(h), grid), 1.0);
        const auto c2 = malliavin_covariance(*m, sf, increment_gram(HurstParameter(h), fine_grid), 1.0);
        CHECK((c1.matrix - c2.matrix).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("ou covariance") {
    const auto m = make_model("ou");
    const auto grid = TimeGrid::uniform(512);
    const auto w = sample_fbm(HurstParameter(0.5), grid, 1, 1, 6).front();
    const auto s = solve_driven(*m, w);
    const auto cov = malliavin_covariance(*m, s, increment_gram(HurstParameter(0.5), grid), 1.0);
    CHECK(std::abs(cov.matrix(0, 0) - (1.0 - std::exp(-2.0)) / 2.0) <= 1e-3);
    // exact for the discretized functional: mean of e^{-(1-s)} over each segment
    double discrete = 0.0;
    for (std::size_t j = 0; j < 512; ++j) {
        const double a = grid[j], b = grid[j + 1];
        const double avg = (std::exp(-(1.0 - b)) - std::exp(-(1.0 - a))) / (b - a);
        discrete += avg * avg * (b - a);
    }
    CHECK(cov.matrix(0, 0) == doctest::Approx(discrete).epsilon(1e-9));
    CHECK(cov.is_psd());
}

TEST_CASE("covariance is psd on the bounded preset") {
    const auto m = make_model("bounded");
    const auto grid = TimeGrid::uniform(32);
    const auto gram = increment_gram(HurstParameter(0.4), grid);
    for (const auto& w : sample_fbm(HurstParameter(0.4), grid, 2, 5, 8)) {
        const auto cov = malliavin_covariance(*m, solve_driven(*m, w), gram, 1.0);
        CHECK(cov.is_psd());
        CHECK((cov.matrix - cov.matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK(cov.min_eigenvalue > 0.0);
    }
}

TEST_CASE("nondegeneracy report") {
    std::vector<MalliavinCovariance> ids(5);
    for (auto& c : ids) {
        c.matrix = Eigen::MatrixXd::Identity(2, 2);
        c.min_eigenvalue = 1.0;
    }
    const auto r = nondegeneracy_report(ids);
    for (double q : r.min_eigenvalue_quantiles) CHECK(q == 1.0);
    CHECK(r.det_mean == 1.0);
    CHECK(r.flagged_fraction == 0.0);

    std::vector<MalliavinCovariance> ten(10);
    for (std::size_t i = 0; i < 10; ++i) {
        ten[i].matrix = Eigen::MatrixXd::Identity(2, 2);
        ten[i].min_eigenvalue = 1.0;
    }
    ten[3].matrix(1, 1) = 0.0;
    ten[3].min_eigenvalue = 0.0;
    const auto r2 = nondegeneracy_report(ten);
    CHECK(r2.flagged_fraction == doctest::Approx(0.1));
    CHECK(std::isinf(r2.inverse_det_moments[0]));
    CHECK_THROWS_AS(nondegeneracy_report(std::vector<MalliavinCovariance>{}), ConfigError);
    CHECK(r2.to_json().contains("flagged_fraction"));

    // OU batch: det is the scalar variance
    const auto m = make_model("ou");
    const auto grid = TimeGrid::uniform(64);
    const auto gram = increment_gram(HurstParameter(0.5), grid);
    std::vector<MalliavinCovariance> batch;
    for (const auto& w : sample_fbm(HurstParameter(0.5), grid, 1, 1000, 12)) batch.push_back(malliavin_covariance(*m, solve_driven(*m, w), gram, 1.0));
    const auto r3 = nondegeneracy_report(batch);
    CHECK(std::abs(r3.det_mean - (1.0 - std::exp(-2.0)) / 2.0) <= 3.0 * r3.det_stderr + 1e-3);
}

TEST_CASE("derivative and matrix export") {
    const auto m = make_model("identity");
    const auto w = line(2);
    const auto x = directional_derivative(*m, solve_driven(*m, w), w, 1);
    std::ostringstream os;
    write_derivative_csv(os, x);
    CHECK(os.str().rfind("t,xi_1\n", 0) == 0);
    std::ostringstream ms;
    write_matrix_csv(ms, Eigen::MatrixXd::Identity(2, 2));
    CHECK(!ms.str().empty());
}
