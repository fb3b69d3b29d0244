#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <roughwz/errors.hpp>
#include <roughwz/experiments.hpp>

using namespace roughwz;

TEST_CASE("rate fit on exact power laws") {
    std::vector<std::pair<double, double>> pts;
    for (double m : {8.0, 16.0, 32.0, 64.0}) pts.emplace_back(m, 3.0 * std::pow(m, -0.75));
    const auto f = fit_rate(pts);
    CHECK(f.slope == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(f.slope_stderr <= 1e-12);
    CHECK(f.points == 4);

    std::vector<std::pair<double, double>> flat;
    for (double m : {8.0, 16.0, 32.0}) flat.emplace_back(m, 0.2);
    CHECK(std::abs(fit_rate(flat).slope) <= 1e-14);

    // overall scale does not move the slope
    auto scaled = pts;
    for (auto& p : scaled) p.second *= 1e-4;
    CHECK(fit_rate(scaled).slope == doctest::Approx(f.slope).epsilon(1e-12));

    CHECK_THROWS_AS(fit_rate(std::vector<std::pair<double, double>>{{8.0, 1.0}, {16.0, 0.5}}), InconclusiveError);
    CHECK_THROWS_AS(fit_rate(std::vector<std::pair<double, double>>{{8.0, 1.0}, {16.0, 0.0}, {32.0, 0.1}}),
                    InconclusiveError);
}

TEST_CASE("rate fit recovers noisy slopes") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0.0, 0.05);
    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<double, double>> pts;
        for (double m : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0}) pts.emplace_back(m, std::pow(m, -0.3) * (1.0 + g(rng)));
        const double slope = fit_rate(pts).slope;
        if (slope >= 0.2 && slope <= 0.4) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("summary statistics") {
    const auto s = summarize(16, {0.0, 1.0, 2.0, 3.0, 4.0});
    CHECK(s.m == 16);
    CHECK(s.mean == 2.0);
    CHECK(s.median == 2.0);
    CHECK(s.zeros == 1);
    CHECK(s.q90 == doctest::Approx(3.6));
    CHECK(s.standard_error == doctest::Approx(std::sqrt(2.5 / 5.0)));
    std::ostringstream os;
    write_study_csv(os, std::vector<MStatistic>{s});
    CHECK(os.str().rfind("m,stat_mean,stat_median,stat_q90,stderr\n16,2,", 0) == 0);
}

TEST_CASE("study config parsing and validation") {
    StudyConfig c;
    CHECK_NOTHROW(c.validate());
    const auto back = StudyConfig::from_json(c.to_json());
    CHECK(back.schedule == c.schedule);
    CHECK(back.m_ref == c.m_ref);
    CHECK(back.solver.initial_substeps == 2);

    const auto parsed = StudyConfig::from_json({{"kind", "lift"}, {"hurst", 0.4}, {"schedule", {4, 8, 16}}});
    CHECK(parsed.kind == StudyKind::lift);
    CHECK(parsed.m_ref == 1024);
    CHECK(StudyConfig::from_json({{"schedule", {8, 256}}}).m_ref == 2048);
    CHECK(StudyConfig::from_json({{"kind", "density"}}).m_ref == 2048);

    CHECK_THROWS_AS(StudyConfig::from_json({{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(StudyConfig::from_json({{"kind", "weird"}}), ConfigError);
    CHECK_THROWS_AS(StudyConfig::from_json({{"samples", "many"}}), ConfigError);
    CHECK_THROWS_AS(StudyConfig::from_json(nlohmann::json::array()), ConfigError);

    auto bad = c;
    bad.schedule = {8, 12};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.schedule = {16, 8};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.m_ref = 512;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.hurst = 0.25;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.hurst = 0.6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.samples = 10;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.time = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.kind = StudyKind::density;
    bad.delta = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.kind = StudyKind::lift;
    bad.driver_dim = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    StudyConfig d;
    d.hurst = 0.4;
    CHECK(d.effective_delta() == doctest::Approx(0.3));
    d.delta = 0.1;
    CHECK(d.effective_delta() == 0.1);
}

TEST_CASE("pathwise errors vanish at the reference partition") {
    const auto m = make_model("bounded");
    const auto w = sample_fbm(HurstParameter(0.4), TimeGrid::uniform(64), 2, 1, 5).front();
    const std::size_t schedule[] = {4, 16, 64};
    const auto e = pathwise_errors(*m, w, schedule, StudyConfig{}.solver);
    CHECK(e[0] > 0.0);
    CHECK(e[1] > 0.0);
    CHECK(e[2] == 0.0);
}

TEST_CASE("identity model pathwise rate is the interpolation rate") {
    StudyConfig c;
    c.model = {{"preset", "identity"}};
    c.hurst = 0.4;
    c.schedule = {8, 16, 32, 64};
    c.m_ref = 512;
    c.samples = 400;
    const auto r = run_pathwise_study(c);
    REQUIRE(r.fit);
    CHECK(r.expected_slope == 0.4);
    CHECK(std::abs(r.fit->slope - 0.4) <= 0.1);
    CHECK(r.rows.size() == 4);
    CHECK(r.to_json().at("fit").at("slope").get<double>() == r.fit->slope);
}

TEST_CASE("levy area of piecewise-linear paths") {
    // unit square loop: area 1
    SamplePath sq(TimeGrid::uniform(4), 2, {0, 0, 1, 0, 1, 1, 0, 1, 0, 0});
    const auto a = running_levy_area(sq);
    CHECK(a[4 * 4 + 1] == doctest::Approx(1.0));
    CHECK(a[4 * 4 + 2] == doctest::Approx(-1.0));
    // coarsening a single straight segment changes nothing
    std::vector<double> v;
    for (int i = 0; i <= 8; ++i) v.insert(v.end(), {0.5 * i, -0.25 * i});
    const std::size_t schedule[] = {1, 2, 4};
    for (double e : levy_area_errors(SamplePath(TimeGrid::uniform(8), 2, v), schedule)) CHECK(std::abs(e) <= 1e-15);
    const std::size_t sched_sq[] = {1, 2};
    const auto se = levy_area_errors(sq, sched_sq);
    CHECK(se[0] == doctest::Approx(1.0));
}

TEST_CASE("lift study is deterministic and thread independent") {
    StudyConfig c;
    c.kind = StudyKind::lift;
    c.schedule = {4, 8, 16};
    c.m_ref = 128;
    c.samples = 150;
    const auto a = run_lift_study(c);
    c.threads = 3;
    const auto b = run_lift_study(c);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.rows[i].mean == b.rows[i].mean);
        CHECK(a.rows[i].q90 == b.rows[i].q90);
    }
    CHECK(a.rows[0].mean > a.rows[2].mean);
    c.lift_statistic = "pvar";
    c.samples = 100;
    const auto p = run_lift_study(c);
    CHECK(p.config.at("pvar_p_resolved").get<double>() == doctest::Approx(2.5));
    CHECK(p.rows[0].mean > p.rows[2].mean);
}

TEST_CASE("n-functional counts") {
    SamplePath zero(TimeGrid::uniform(64), 2);
    const std::size_t schedule[] = {8, 16, 64};
    for (auto n : nfunc_samples(zero, schedule, 2.5, 1.0)) CHECK(n == 0);
    const auto w = sample_fbm(HurstParameter(0.4), TimeGrid::uniform(64), 2, 1, 3).front();
    const auto small = nfunc_samples(w, schedule, 3.0, 0.05);
    const auto large = nfunc_samples(w, schedule, 3.0, 0.5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(small[i] >= large[i]);

    StudyConfig c;
    c.kind = StudyKind::nfunc_stats;
    c.hurst = 0.4;
    c.schedule = {8, 16, 32};
    c.m_ref = 256;
    c.samples = 100;
    c.nfunc_p = 3.0;
    c.nfunc_beta = 0.5;
    c.eta = {0.1, 0.5};
    const auto s = run_nfunc_stats(c);
    CHECK(s.rows.size() == 3);
    CHECK(s.stability_ratio.size() == 2);
    for (double r : s.stability_ratio) CHECK(r >= 1.0);
    CHECK(s.config.at("lift_level") == 3);
    CHECK(s.to_json().at("rows").size() == 3);
}

TEST_CASE("density study on a small oracle case") {
    StudyConfig c;
    c.kind = StudyKind::density;
    c.model = {{"preset", "ou"}};
    c.schedule = {8, 16, 32};
    c.m_ref = 256;
    c.samples = 4000;
    c.max_samples = 4000;
    c.xi_points = 41;
    c.delta = 0.5;
    c.solver.initial_substeps = 1;
    const auto r = run_density_study(c);
    CHECK(r.rows.size() == 3);
    CHECK(r.rows[0].mean > r.rows[2].mean);
    CHECK(r.extra.contains("per_m"));
    CHECK(r.expected_slope == doctest::Approx(0.5));

    auto bad = c;
    bad.model = {{"preset", "bounded"}};
    bad.density_reference = "oracle";
    CHECK_THROWS_AS(run_density_study(bad), ConfigError);
    CHECK_THROWS_AS(run_pathwise_study(c), ConfigError);
}
