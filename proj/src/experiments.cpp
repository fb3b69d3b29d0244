#include "roughwz/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "roughwz/errors.hpp"
#include "roughwz/parallel.hpp"
#include "roughwz/rng.hpp"
#include "roughwz/roughpath.hpp"
#include "roughwz/tensor.hpp"

namespace roughwz {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// values[m_index][path], filled per path so the layout does not depend on threads
template <class Fn>
std::vector<std::vector<double>> per_path(std::size_t paths, std::size_t columns, unsigned threads, Fn&& fn) {
    std::vector<std::vector<double>> out(columns, std::vector<double>(paths));
    parallel_blocks(paths, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const auto row = fn(p);
            for (std::size_t c = 0; c < columns; ++c) out[c][p] = row[c];
        }
    });
    return out;
}

void finish_fit(ConvergenceReport& report) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : report.rows) {
        if (r.mean > 0.0)
            pts.emplace_back(static_cast<double>(r.m), r.mean);
        else
            report.excluded_m.push_back(r.m);
    }
    try {
        report.fit = fit_rate(pts);
    } catch (const InconclusiveError& e) {
        report.inconclusive = true;
        report.note = e.what();
    }
}

StudyConfig proxy_variant(const StudyConfig& c) {
    StudyConfig v = c;
    v.m_ref = 2 * c.m_ref;
    v.verify_proxy = false;
    return v;
}

void attach_proxy_check(ConvergenceReport& report, const ConvergenceReport& doubled) {
    nlohmann::json j = {{"m_ref", doubled.config.at("m_ref")}};
    if (doubled.fit) j["slope"] = doubled.fit->slope, j["slope_stderr"] = doubled.fit->slope_stderr;
    std::vector<double> means;
    for (const auto& r : doubled.rows) means.push_back(r.mean);
    j["stat_mean"] = means;
    report.extra["proxy_check"] = j;
}

}  // namespace

std::string to_string(StudyKind kind) {
    switch (kind) {
        case StudyKind::pathwise: return "pathwise";
        case StudyKind::lift: return "lift";
        case StudyKind::density: return "density";
        case StudyKind::nfunc_stats: return "nfunc-stats";
    }
    return "unknown";
}

StudyKind study_kind_from_string(const std::string& s) {
    if (s == "pathwise") return StudyKind::pathwise;
    if (s == "lift") return StudyKind::lift;
    if (s == "density") return StudyKind::density;
    if (s == "nfunc-stats" || s == "nfunc_stats") return StudyKind::nfunc_stats;
    throw ConfigError("unknown study kind '" + s + "'");
}

StudyConfig StudyConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("study config must be a JSON object");
    static const std::vector<std::string> known = {
        "kind", "model", "hurst", "schedule", "m_ref", "samples", "t", "seed", "threads", "out", "solver",
        "driver_dim", "lift_statistic", "pvar_p", "delta", "density_reference", "max_samples", "xi_points",
        "xi_range", "resolve_fraction", "p", "beta", "eta", "verify_proxy"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown study config key '" + key + "'");
    StudyConfig c;
    try {
        if (j.contains("kind")) c.kind = study_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("model")) {
            c.model = j.at("model").is_string() ? nlohmann::json{{"preset", j.at("model")}} : j.at("model");
        }
        c.hurst = j.value("hurst", c.hurst);
        if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::vector<std::size_t>>();
        if (j.contains("m_ref")) {
            c.m_ref = j.at("m_ref").get<std::size_t>();
        } else if (!c.schedule.empty()) {
            const std::size_t top = *std::max_element(c.schedule.begin(), c.schedule.end());
            c.m_ref = std::max(c.m_ref, 8 * top);
            if (c.kind == StudyKind::density) c.m_ref = std::max<std::size_t>(2048, 8 * top);
        }
        c.samples = j.value("samples", c.samples);
        c.time = j.value("t", c.time);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        c.out_dir = j.value("out", c.out_dir);
        if (j.contains("solver")) {
            nlohmann::json s = c.solver.to_json();
            s.update(j.at("solver"));
            c.solver = SolverOptions::from_json(s);
        }
        c.driver_dim = j.value("driver_dim", c.driver_dim);
        c.lift_statistic = j.value("lift_statistic", c.lift_statistic);
        c.pvar_p = j.value("pvar_p", c.pvar_p);
        if (j.contains("delta") && !j.at("delta").is_null()) c.delta = j.at("delta").get<double>();
        c.density_reference = j.value("density_reference", c.density_reference);
        c.max_samples = j.value("max_samples", std::max(c.max_samples, c.samples));
        c.xi_points = j.value("xi_points", c.xi_points);
        if (j.contains("xi_range")) {
            const auto r = j.at("xi_range").get<std::vector<double>>();
            if (r.size() != 2) throw ConfigError("xi_range must be [lo, hi]");
            c.xi_range = std::make_pair(r[0], r[1]);
        }
        c.resolve_fraction = j.value("resolve_fraction", c.resolve_fraction);
        c.nfunc_p = j.value("p", c.nfunc_p);
        c.nfunc_beta = j.value("beta", c.nfunc_beta);
        if (j.contains("eta")) c.eta = j.at("eta").get<std::vector<double>>();
        c.verify_proxy = j.value("verify_proxy", c.verify_proxy);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed study config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json StudyConfig::to_json() const {
    nlohmann::json j = {{"kind", to_string(kind)},
                        {"model", model},
                        {"hurst", hurst},
                        {"schedule", schedule},
                        {"m_ref", m_ref},
                        {"samples", samples},
                        {"t", time},
                        {"seed", seed},
                        {"threads", threads},
                        {"out", out_dir},
                        {"solver", solver.to_json()},
                        {"verify_proxy", verify_proxy}};
    switch (kind) {
        case StudyKind::lift:
            j["driver_dim"] = driver_dim;
            j["lift_statistic"] = lift_statistic;
            j["pvar_p"] = pvar_p;
            break;
        case StudyKind::density:
            j["delta"] = effective_delta();
            j["density_reference"] = density_reference;
            j["max_samples"] = max_samples;
            j["xi_points"] = xi_points;
            if (xi_range) j["xi_range"] = {xi_range->first, xi_range->second};
            j["resolve_fraction"] = resolve_fraction;
            break;
        case StudyKind::nfunc_stats:
            j["p"] = nfunc_p;
            j["beta"] = nfunc_beta;
            j["eta"] = eta;
            break;
        default: break;
    }
    return j;
}

double StudyConfig::effective_delta() const { return delta ? *delta : 2.0 * hurst - 0.5; }

void StudyConfig::validate() const {
    HurstParameter(hurst).require_lift_range();
    if (schedule.empty()) throw ConfigError("m-schedule is empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!is_power_of_two(schedule[i])) throw ConfigError("m-schedule entries must be powers of two");
        if (i > 0 && schedule[i] <= schedule[i - 1]) throw ConfigError("m-schedule must be strictly increasing");
        if (m_ref % schedule[i] != 0) throw ConfigError("every m must divide m_ref");
    }
    if (!is_power_of_two(m_ref)) throw ConfigError("m_ref must be a power of two");
    if (m_ref < 8 * schedule.back()) throw ConfigError("m_ref must be at least 8 * max(m)");
    if (samples < 100) throw ConfigError("need at least 100 samples per m");
    if (!(time > 0.0 && time <= 1.0)) throw ConfigError("t must lie in (0,1]");
    if (solver.initial_substeps < 1) throw ConfigError("solver substeps must be >= 1");
    switch (kind) {
        case StudyKind::pathwise: break;
        case StudyKind::lift:
            if (driver_dim < 2) throw ConfigError("lift study needs driver_dim >= 2");
            if (lift_statistic != "levy-node-sup" && lift_statistic != "pvar")
                throw ConfigError("lift_statistic must be levy-node-sup or pvar");
            if (pvar_p < 0.0) throw ConfigError("pvar_p must be positive");
            break;
        case StudyKind::density:
            if (!(effective_delta() > 0.0)) throw ConfigError("delta must be positive");
            if (schedule.front() < 2) throw ConfigError("density study needs m >= 2");
            if (!density_reference.empty() && density_reference != "oracle" && density_reference != "self")
                throw ConfigError("density_reference must be oracle or self");
            if (max_samples < samples) throw ConfigError("max_samples must be >= samples");
            if (!(resolve_fraction > 0.0)) throw ConfigError("resolve_fraction must be positive");
            if (xi_range && !(xi_range->second > xi_range->first)) throw ConfigError("xi_range needs lo < hi");
            break;
        case StudyKind::nfunc_stats:
            if (!(nfunc_p >= 1.0)) throw ConfigError("p must be >= 1");
            if (!(nfunc_beta > 0.0)) throw ConfigError("beta must be positive");
            if (eta.empty()) throw ConfigError("eta list is empty");
            break;
    }
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
    std::vector<double> x, y;
    for (const auto& [m, err] : points) {
        if (!(m > 0.0) || !(err > 0.0) || !std::isfinite(err)) continue;
        x.push_back(std::log(m));
        y.push_back(std::log(err));
    }
    if (x.size() < 3) throw InconclusiveError("rate fit needs at least 3 positive-error points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw InconclusiveError("rate fit needs distinct m values");
    const double b = sxy / sxx;
    const double a = my - b * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - a - b * x[i];
        rss += r * r;
    }
    RateFit fit;
    fit.slope = -b + 0.0;
    fit.intercept = a;
    fit.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
    fit.points = x.size();
    return fit;
}

MStatistic summarize(std::size_t m, std::vector<double> values) {
    MStatistic s;
    s.m = m;
    s.samples = values.size();
    if (values.empty()) return s;
    CompensatedSum sum;
    for (double v : values) {
        sum.add(v);
        if (v == 0.0) ++s.zeros;
    }
    const double n = static_cast<double>(values.size());
    s.mean = sum.value() / n;
    CompensatedSum sq;
    for (double v : values) sq.add((v - s.mean) * (v - s.mean));
    s.standard_error = values.size() > 1 ? std::sqrt(sq.value() / (n - 1.0) / n) : 0.0;
    std::sort(values.begin(), values.end());
    s.median = quantile(values, 0.5);
    s.q90 = quantile(values, 0.9);
    return s;
}

nlohmann::json ConvergenceReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"m", r.m},
                             {"stat_mean", r.mean},
                             {"stat_median", r.median},
                             {"stat_q90", r.q90},
                             {"stderr", r.standard_error},
                             {"samples", r.samples},
                             {"zeros", r.zeros}});
    nlohmann::json j = {{"kind", to_string(kind)},
                        {"rows", rows_json},
                        {"expected_slope", expected_slope},
                        {"excluded_m", excluded_m},
                        {"inconclusive", inconclusive},
                        {"note", note},
                        {"config", config},
                        {"extra", extra},
                        {"wall_seconds", wall_seconds}};
    if (fit)
        j["fit"] = {{"slope", fit->slope},
                    {"intercept", fit->intercept},
                    {"slope_stderr", fit->slope_stderr},
                    {"points", fit->points}};
    else
        j["fit"] = nullptr;
    return j;
}

std::vector<double> pathwise_errors(const VectorFieldModel& model, const SamplePath& w,
                                    std::span<const std::size_t> schedule, const SolverOptions& solver) {
    const TimeGrid& fine = w.grid();
    const auto reference = solve_driven(model, w, solver);
    std::vector<double> out;
    out.reserve(schedule.size());
    for (std::size_t m : schedule) {
        const auto coarse = restrict_to_partition(w, TimeGrid::uniform(m));
        const auto driver = refine_piecewise_linear(coarse, fine);
        const auto approx = solve_driven(model, driver, solver);
        out.push_back(evaluate_solution_sup_distance(approx, reference));
    }
    return out;
}

std::vector<double> running_levy_area(const SamplePath& w) {
    const std::size_t d = w.dim(), nodes = w.grid().nodes();
    std::vector<double> area(nodes * d * d, 0.0);
    for (std::size_t k = 0; k + 1 < nodes; ++k) {
        const double* cur = area.data() + k * d * d;
        double* next = area.data() + (k + 1) * d * d;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                next[i * d + j] = cur[i * d + j] + 0.5 * (w(k, i) * w.increment(k, j) - w(k, j) * w.increment(k, i));
    }
    return area;
}

std::vector<double> levy_area_errors(const SamplePath& w, std::span<const std::size_t> schedule) {
    const std::size_t d = w.dim();
    const auto ref = running_levy_area(w);
    std::vector<double> out;
    out.reserve(schedule.size());
    for (std::size_t m : schedule) {
        const auto coarse = refine_piecewise_linear(restrict_to_partition(w, TimeGrid::uniform(m)), w.grid());
        const auto area = running_levy_area(coarse);
        double worst = 0.0;
        for (std::size_t k = 0; k < w.grid().nodes(); ++k)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i + 1; j < d; ++j) {
                    const std::size_t at = k * d * d + i * d + j;
                    worst = std::max(worst, std::abs(area[at] - ref[at]));
                }
        out.push_back(worst);
    }
    return out;
}

ConvergenceReport run_pathwise_study(const StudyConfig& config) {
    if (config.kind != StudyKind::pathwise) throw ConfigError("config kind is not pathwise");
    config.validate();
    const auto start = Clock::now();
    const auto model = make_model(config.model);
    const TimeGrid fine = TimeGrid::uniform(config.m_ref);
    const FbmSampler sampler(HurstParameter(config.hurst), fine, model->driver_dim());
    const unsigned threads = resolve_threads(config.threads);

    const auto errors = per_path(config.samples, config.schedule.size(), threads, [&](std::size_t p) {
        return pathwise_errors(*model, sampler.sample(config.seed, p), config.schedule, config.solver);
    });

    ConvergenceReport report;
    report.kind = StudyKind::pathwise;
    report.config = config.to_json();
    report.config["model_resolved"] = model->describe();
    // y = w for the identity model, where the error is the interpolation error of w
    report.expected_slope = model->name() == "identity" ? config.hurst : 2.0 * config.hurst - 0.5;
    for (std::size_t i = 0; i < config.schedule.size(); ++i)
        report.rows.push_back(summarize(config.schedule[i], errors[i]));
    finish_fit(report);
    if (config.verify_proxy) attach_proxy_check(report, run_pathwise_study(proxy_variant(config)));
    report.wall_seconds = seconds_since(start);
    return report;
}

ConvergenceReport run_lift_study(const StudyConfig& config) {
    if (config.kind != StudyKind::lift) throw ConfigError("config kind is not lift");
    config.validate();
    const auto start = Clock::now();
    const TimeGrid fine = TimeGrid::uniform(config.m_ref);
    const FbmSampler sampler(HurstParameter(config.hurst), fine, config.driver_dim);
    const unsigned threads = resolve_threads(config.threads);
    const bool pvar_mode = config.lift_statistic == "pvar";
    const double p = config.pvar_p > 0.0 ? config.pvar_p : 1.0 / config.hurst + 0.5;

    const auto errors = per_path(config.samples, config.schedule.size(), threads, [&](std::size_t path) {
        const auto w = sampler.sample(config.seed, path);
        if (!pvar_mode) return levy_area_errors(w, config.schedule);
        const auto ref = lift_piecewise_linear(w, 2, p);
        std::vector<double> out;
        for (std::size_t m : config.schedule) {
            const auto coarse = refine_piecewise_linear(restrict_to_partition(w, TimeGrid::uniform(m)), fine);
            out.push_back(pvar_distance(lift_piecewise_linear(coarse, 2, p), ref, p));
        }
        return out;
    });

    ConvergenceReport report;
    report.kind = StudyKind::lift;
    report.config = config.to_json();
    if (pvar_mode) report.config["pvar_p_resolved"] = p;
    report.expected_slope = 2.0 * config.hurst - 0.5;
    for (std::size_t i = 0; i < config.schedule.size(); ++i)
        report.rows.push_back(summarize(config.schedule[i], errors[i]));
    finish_fit(report);
    if (config.verify_proxy) attach_proxy_check(report, run_lift_study(proxy_variant(config)));
    report.wall_seconds = seconds_since(start);
    return report;
}

ConvergenceReport run_density_study(const StudyConfig& config) {
    if (config.kind != StudyKind::density) throw ConfigError("config kind is not density");
    config.validate();
    const auto start = Clock::now();
    const auto model = make_model(config.model);
    const std::size_t e = model->state_dim();
    if (e > 2) throw ConfigError("density study supports state dimension <= 2");
    const double delta = config.effective_delta();
    const bool oracle_available = model->as_affine() && config.hurst == 0.5;
    const std::string mode = config.density_reference.empty() ? (oracle_available ? "oracle" : "self")
                                                              : config.density_reference;
    if (mode == "oracle" && !oracle_available)
        throw ConfigError("unsupported-oracle: oracle mode needs the affine preset at H = 1/2");
    const bool self = mode == "self";
    const unsigned threads = resolve_threads(config.threads);

    // evaluation grid
    std::vector<double> center(e), spread(e);
    std::optional<GaussianLaw> law;
    if (!self) {
        law = affine_law(*model, config.hurst, config.time);
        for (std::size_t a = 0; a < e; ++a) {
            center[a] = law->mean[static_cast<Eigen::Index>(a)];
            spread[a] = std::sqrt(law->covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
        }
    } else if (!config.xi_range) {
        // pilot run on the reference grid, independent stream
        const std::size_t pilot = 2000;
        const FbmSampler pilot_sampler(HurstParameter(config.hurst), TimeGrid::uniform(config.m_ref),
                                       model->driver_dim());
        const std::uint64_t pilot_seed = derive_seed(config.seed, 0x9107);
        const auto ys = per_path(pilot, e, threads, [&](std::size_t p) {
            return solve_state_at(*model, pilot_sampler.sample(pilot_seed, p), config.time, config.solver);
        });
        for (std::size_t a = 0; a < e; ++a) {
            const auto s = summarize(0, ys[a]);
            center[a] = s.mean;
            spread[a] = s.standard_error * std::sqrt(static_cast<double>(pilot));
        }
    }
    XiGrid xi;
    const std::size_t points = config.xi_points ? config.xi_points : (e == 1 ? 201 : 41);
    for (std::size_t a = 0; a < e; ++a) {
        const double lo = config.xi_range ? config.xi_range->first : center[a] - 4.0 * spread[a];
        const double hi = config.xi_range ? config.xi_range->second : center[a] + 4.0 * spread[a];
        if (!(hi > lo)) throw NumericalError("degenerate law: zero spread at the evaluation time");
        xi.axes.push_back(XiGrid::uniform(lo, hi, points).axes.front());
    }

    std::vector<std::size_t> ms = config.schedule;
    if (self) ms.push_back(config.m_ref);
    std::vector<double> bandwidths;
    for (auto m : ms) bandwidths.push_back(std::pow(static_cast<double>(m), -delta));
    const std::size_t sample_m = self ? config.m_ref : config.schedule.back();
    CoupledDensityBatch batch(model, config.hurst, config.time, ms, sample_m, bandwidths, xi, config.solver,
                              config.seed, threads);

    std::vector<double> reference_values;
    if (!self) {
        reference_values.resize(xi.size());
        for (std::size_t i = 0; i < xi.size(); ++i) reference_values[i] = law->density(xi.point(i));
    }

    // exact estimator law when y_t = S w_t + c t (affine with A = 0)
    std::optional<GaussianLaw> exact_base;
    if (const auto* aff = model->as_affine(); aff && aff->drift_matrix().isZero(0.0)) {
        GaussianLaw g;
        g.mean = aff->drift_offset() * config.time;
        g.covariance = std::pow(config.time, 2.0 * config.hurst) * aff->sigma() * aff->sigma().transpose();
        exact_base = g;
    }

    ConvergenceReport report;
    report.kind = StudyKind::density;
    report.config = config.to_json();
    report.config["model_resolved"] = model->describe();
    report.config["density_reference"] = mode;
    report.expected_slope = std::min(2.0 * config.hurst - 0.5, delta);
    nlohmann::json rounds = nlohmann::json::array();

    std::size_t target = config.samples;
    std::vector<double> sup(config.schedule.size()), se_at(config.schedule.size()), se_max(config.schedule.size());
    std::vector<std::size_t> argmax(config.schedule.size());
    std::vector<DensityEstimate> estimates;
    while (true) {
        batch.run(target - batch.paths());
        estimates.clear();
        for (std::size_t i = 0; i < ms.size(); ++i) estimates.push_back(batch.estimate(i));
        const DensityEstimate* ref = self ? &estimates.back() : nullptr;
        if (self) reference_values = ref->values;
        double smallest = std::numeric_limits<double>::infinity(), noise = 0.0;
        for (std::size_t i = 0; i < config.schedule.size(); ++i) {
            const auto err = sup_error(estimates[i], std::span<const double>(reference_values));
            sup[i] = err.value;
            argmax[i] = err.index;
            auto combined = [&](std::size_t k) {
                const double a = estimates[i].stderrs[k];
                const double b = self ? ref->stderrs[k] : 0.0;
                return std::sqrt(a * a + b * b);
            };
            se_at[i] = combined(err.index);
            se_max[i] = 0.0;
            for (std::size_t k = 0; k < xi.size(); ++k) se_max[i] = std::max(se_max[i], combined(k));
            smallest = std::min(smallest, sup[i]);
            noise = std::max(noise, se_max[i]);
        }
        const bool resolved = noise <= config.resolve_fraction * smallest;
        rounds.push_back({{"samples", batch.paths()}, {"smallest_error", smallest}, {"max_stderr", noise},
                          {"resolved", resolved}});
        if (resolved) break;
        if (target >= config.max_samples) {
            report.inconclusive = true;
            report.note = "Monte Carlo noise floor not reached under the sample cap";
            break;
        }
        target = std::min(4 * target, config.max_samples);
    }

    nlohmann::json per_m = nlohmann::json::array();
    for (std::size_t i = 0; i < config.schedule.size(); ++i) {
        MStatistic row;
        row.m = config.schedule[i];
        row.mean = row.median = row.q90 = sup[i];
        row.standard_error = se_at[i];
        row.samples = batch.paths();
        row.zeros = sup[i] == 0.0 ? 1 : 0;
        report.rows.push_back(row);
        nlohmann::json mj = {{"m", row.m},
                             {"bandwidth", bandwidths[i]},
                             {"argmax_xi", xi.point(argmax[i])},
                             {"max_stderr", se_max[i]},
                             {"grid_mass", e <= 2 ? estimates[i].trapezoid_mass() : 1.0}};
        if (exact_base) {
            GaussianLaw smoothed = *exact_base;
            smoothed.covariance += bandwidths[i] * bandwidths[i] * Eigen::MatrixXd::Identity(
                                                                       static_cast<Eigen::Index>(e),
                                                                       static_cast<Eigen::Index>(e));
            double bias = 0.0;
            for (std::size_t k = 0; k < xi.size(); ++k) {
                const auto pt = xi.point(k);
                bias = std::max(bias, std::abs(smoothed.density(pt) - exact_base->density(pt)));
            }
            mj["analytic_sup_bias"] = bias;
        }
        per_m.push_back(mj);
    }
    report.extra["per_m"] = per_m;
    report.extra["escalation"] = rounds;
    report.extra["xi_range"] = {xi.axes.front().front(), xi.axes.front().back()};
    if (!report.inconclusive) {
        finish_fit(report);
    } else {
        // reported for diagnosis only, not as the study result
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : report.rows) pts.emplace_back(static_cast<double>(r.m), r.mean);
        try {
            const auto f = fit_rate(pts);
            report.extra["unresolved_fit"] = {{"slope", f.slope}, {"slope_stderr", f.slope_stderr}};
        } catch (const InconclusiveError&) {
        }
    }
    if (config.verify_proxy && self) attach_proxy_check(report, run_density_study(proxy_variant(config)));
    report.wall_seconds = seconds_since(start);
    return report;
}

std::vector<std::size_t> nfunc_samples(const SamplePath& w, std::span<const std::size_t> schedule, double p,
                                       double beta) {
    const int level = std::min(kMaxLevel, std::max(1, static_cast<int>(std::floor(p))));
    std::vector<std::size_t> out;
    for (std::size_t m : schedule) {
        const auto coarse = restrict_to_partition(w, TimeGrid::uniform(m));
        out.push_back(n_functional(lift_piecewise_linear(coarse, level, p), p, beta).count);
    }
    return out;
}

nlohmann::json NFuncSummary::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        rows_json.push_back({{"m", r.m},
                             {"stat_mean", r.mean},
                             {"stat_median", r.median},
                             {"stat_q90", r.q90},
                             {"stderr", r.standard_error},
                             {"samples", r.samples},
                             {"exp_moments", exp_moments[i]},
                             {"exp_moment_stderr", exp_moment_stderr[i]}});
    }
    return {{"kind", "nfunc-stats"},
            {"rows", rows_json},
            {"eta", eta},
            {"stability_ratio", stability_ratio},
            {"config", config},
            {"wall_seconds", wall_seconds}};
}

NFuncSummary run_nfunc_stats(const StudyConfig& config) {
    if (config.kind != StudyKind::nfunc_stats) throw ConfigError("config kind is not nfunc-stats");
    config.validate();
    const auto start = Clock::now();
    const TimeGrid fine = TimeGrid::uniform(config.m_ref);
    const FbmSampler sampler(HurstParameter(config.hurst), fine, config.driver_dim);
    const unsigned threads = resolve_threads(config.threads);
    const auto counts = per_path(config.samples, config.schedule.size(), threads, [&](std::size_t p) {
        const auto n = nfunc_samples(sampler.sample(config.seed, p), config.schedule, config.nfunc_p,
                                     config.nfunc_beta);
        return std::vector<double>(n.begin(), n.end());
    });

    NFuncSummary s;
    s.eta = config.eta;
    s.config = config.to_json();
    s.config["driver_dim"] = config.driver_dim;
    s.config["lift_level"] = std::min(kMaxLevel, std::max(1, static_cast<int>(std::floor(config.nfunc_p))));
    for (std::size_t i = 0; i < config.schedule.size(); ++i) {
        s.rows.push_back(summarize(config.schedule[i], counts[i]));
        std::vector<double> mom, err;
        for (double eta : config.eta) {
            std::vector<double> v;
            v.reserve(counts[i].size());
            for (double n : counts[i]) v.push_back(std::exp(eta * n));
            const auto st = summarize(0, v);
            mom.push_back(st.mean);
            err.push_back(st.standard_error);
        }
        s.exp_moments.push_back(mom);
        s.exp_moment_stderr.push_back(err);
    }
    for (std::size_t k = 0; k < config.eta.size(); ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& mom : s.exp_moments) {
            lo = std::min(lo, mom[k]);
            hi = std::max(hi, mom[k]);
        }
        s.stability_ratio.push_back(hi / lo);
    }
    s.wall_seconds = seconds_since(start);
    return s;
}

void write_study_csv(std::ostream& os, std::span<const MStatistic> rows) {
    os << "m,stat_mean,stat_median,stat_q90,stderr\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.m << ',' << r.mean << ',' << r.median << ',' << r.q90 << ',' << r.standard_error << '\n';
}

}  // namespace roughwz
