#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <roughwz/density.hpp>
#include <roughwz/errors.hpp>
#include <roughwz/experiments.hpp>
#include <roughwz/fbm.hpp>
#include <roughwz/malliavin.hpp>
#include <roughwz/ode.hpp>
#include <roughwz/roughpath.hpp>
#include <roughwz/version.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roughwz;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kInconclusive = 4 };

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out = ".";
};

json load_config(const Globals& g) {
    if (g.config_path.empty()) return json::object();
    std::ifstream in(g.config_path);
    if (!in) throw ConfigError("cannot read config file '" + g.config_path + "'");
    json j = json::parse(in);  // parse_error -> exit 2
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
}

std::uint64_t seed_of(const Globals& g, const json& c) { return g.seed ? *g.seed : c.value("seed", std::uint64_t{1}); }
unsigned threads_of(const Globals& g, const json& c) { return g.threads ? *g.threads : c.value("threads", 1u); }

fs::path out_dir(const Globals& g) {
    fs::path p(g.out);
    fs::create_directories(p);
    return p;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw ConfigError("cannot write '" + p.string() + "'");
    return os;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

// Reads the first (or a selected) path from a CSV in the path_id,t,component_k layout.
SamplePath read_path_csv(const std::string& file, std::size_t path_id) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read path file '" + file + "'");
    std::string line;
    std::getline(in, line);
    std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
    std::vector<double> times, values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != dim + 2) throw ConfigError("ragged row in '" + file + "'");
        if (static_cast<std::size_t>(row[0]) != path_id) continue;
        times.push_back(row[1]);
        values.insert(values.end(), row.begin() + 2, row.end());
    }
    if (times.size() < 2) throw ConfigError("path " + std::to_string(path_id) + " not found in '" + file + "'");
    return SamplePath(TimeGrid(times), dim, values);
}

// {"hurst", "m", "dim", "index"} sampled with the run seed, {"values": [[..]..], "times"?},
// or {"csv": file, "path_id"}.
SamplePath driver_from(const json& spec, std::size_t default_dim, std::uint64_t seed, std::size_t default_index = 0) {
    if (spec.contains("csv")) return read_path_csv(spec.at("csv").get<std::string>(), spec.value("path_id", 0u));
    if (spec.contains("values")) {
        const auto rows = spec.at("values").get<std::vector<std::vector<double>>>();
        if (rows.size() < 2) throw ConfigError("driver needs at least two nodes");
        const std::size_t d = rows.front().size();
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != d) throw ConfigError("driver rows differ in length");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        TimeGrid grid = spec.contains("times") ? TimeGrid(spec.at("times").get<std::vector<double>>())
                                               : TimeGrid::uniform(rows.size() - 1);
        return SamplePath(std::move(grid), d, flat);
    }
    const double h = spec.value("hurst", 0.5);
    const std::size_t m = spec.value("m", 64u);
    const std::size_t d = spec.value("dim", default_dim);
    const std::size_t index = spec.value("index", default_index);
    FbmSampler sampler(HurstParameter(h), TimeGrid::uniform(m), d);
    return sampler.sample(spec.value("seed", seed), index);
}

int level_for(double p, const json& c) {
    return c.value("level", std::min(kMaxLevel, std::max(1, static_cast<int>(std::floor(p)))));
}

json tensors_json(const LevelTensors& x) {
    json j = json::object();
    for (int k = 1; k <= x.level(); ++k)
        j[std::to_string(k)] = std::vector<double>(x.at(k).begin(), x.at(k).end());
    return j;
}

int cmd_sample_fbm(const Globals& g) {
    const json c = load_config(g);
    const HurstParameter h(c.value("hurst", 0.5));
    const TimeGrid grid = c.contains("times") ? TimeGrid(c.at("times").get<std::vector<double>>())
                                              : TimeGrid::uniform(c.value("m", 64u));
    const std::size_t dim = c.value("dim", 1u), count = c.value("count", 10u);
    const auto seed = seed_of(g, c);
    const auto paths = sample_fbm(h, grid, dim, count, seed, threads_of(g, c));
    const auto dir = out_dir(g);
    auto os = open_out(dir / "paths.csv");
    write_paths_csv(os, paths);
    if (c.value("gram", false)) {
        auto gs = open_out(dir / "gram.csv");
        write_gram_csv(gs, increment_gram(h, grid));
    }
    write_json(dir / "paths.json", {{"hurst", h.value()},
                                    {"nodes", grid.nodes()},
                                    {"dim", dim},
                                    {"count", count},
                                    {"seed", seed},
                                    {"circulant", FbmSampler(h, grid, dim).uses_circulant()},
                                    {"versions", build_info()}});
    return kOk;
}

int cmd_lift(const Globals& g) {
    const json c = load_config(g);
    const auto w = driver_from(c.value("driver", json::object()), 2, seed_of(g, c));
    const double p = c.value("p", 2.5);
    const auto lift = lift_piecewise_linear(w, level_for(p, c), p);
    const auto dir = out_dir(g);
    auto os = open_out(dir / "lift.csv");
    write_lift_csv(os, lift);
    const auto total = lift.increment(0, w.grid().nodes() - 1);
    write_json(dir / "lift.json", {{"p", p},
                                   {"level", lift.level()},
                                   {"dim", lift.dim()},
                                   {"segments", w.grid().segments()},
                                   {"signature", tensors_json(total)},
                                   {"homogeneous_norm", homogeneous_pvar_norm(lift, p)},
                                   {"versions", build_info()}});
    return kOk;
}

int cmd_pvar(const Globals& g) {
    const json c = load_config(g);
    const auto seed = seed_of(g, c);
    const auto w = driver_from(c.value("driver", json::object()), 2, seed);
    const double p = c.value("p", 2.5);
    const auto lift = lift_piecewise_linear(w, level_for(p, c), p);
    Window win = full_window(w.grid());
    if (c.contains("window")) {
        const auto st = c.at("window").get<std::vector<double>>();
        if (st.size() != 2) throw ConfigError("window must be [s, t]");
        win = window_at(w.grid(), st[0], st[1]);
    }
    json levels = json::object();
    for (int k = 1; k <= lift.level(); ++k) levels[std::to_string(k)] = pvar_seminorm(lift, k, p / k, win);
    json out = {{"p", p},
                {"level", lift.level()},
                {"window", {w.grid()[win.begin], w.grid()[win.end]}},
                {"seminorms", levels},
                {"homogeneous_norm", homogeneous_pvar_norm(lift, p, win)}};
    if (c.contains("compare")) {
        const auto v = driver_from(c.at("compare"), w.dim(), seed, 1);
        out["distance"] = pvar_distance(lift, lift_piecewise_linear(v, lift.level(), p), p);
    }
    out["versions"] = build_info();
    write_json(out_dir(g) / "pvar.json", out);
    std::cout << out.at("homogeneous_norm").get<double>() << '\n';
    return kOk;
}

int cmd_nfunc(const Globals& g) {
    const json c = load_config(g);
    const auto w = driver_from(c.value("driver", json::object()), 2, seed_of(g, c));
    const double p = c.value("p", 4.0), beta = c.value("beta", 1.0);
    const auto lift = lift_piecewise_linear(w, level_for(p, c), p);
    const auto r = n_functional(lift, p, beta);
    const double norm = homogeneous_pvar_norm(lift, p);
    json out = {{"p", p},
                {"beta", beta},
                {"level", lift.level()},
                {"count", r.count},
                {"breakpoints", r.breakpoints},
                {"homogeneous_norm", norm},
                {"count_bound", std::floor(std::pow(norm, p) / beta)},
                {"versions", build_info()}};
    write_json(out_dir(g) / "nfunc.json", out);
    std::cout << r.count << '\n';
    return kOk;
}

int cmd_solve(const Globals& g) {
    const json c = load_config(g);
    const auto model = make_model(c.value("model", json{{"preset", "bounded"}}));
    const auto w = driver_from(c.value("driver", json::object()), model->driver_dim(), seed_of(g, c));
    const auto opts = SolverOptions::from_json(c.value("solver", json::object()));
    const auto s = solve_driven(*model, w, opts);
    const auto dir = out_dir(g);
    auto os = open_out(dir / "trajectory.csv");
    write_trajectory_csv(os, s);
    write_json(dir / "solve.json", {{"model", model->describe()},
                                    {"solver", opts.to_json()},
                                    {"final_state", std::vector<double>(s.y_at(s.grid.nodes() - 1).begin(),
                                                                        s.y_at(s.grid.nodes() - 1).end())},
                                    {"max_jk_residual", s.has_jacobian ? s.max_jk_residual() : 0.0},
                                    {"substeps", s.substeps},
                                    {"versions", build_info()}});
    return kOk;
}

int cmd_deriv(const Globals& g) {
    const json c = load_config(g);
    const auto seed = seed_of(g, c);
    const auto model = make_model(c.value("model", json{{"preset", "bounded"}}));
    const json dspec = c.value("driver", json::object());
    const auto w = driver_from(dspec, model->driver_dim(), seed);
    // default direction: an independent sample on the same grid
    json hspec = c.value("direction", dspec);
    if (!c.contains("direction") && !dspec.contains("values") && !dspec.contains("csv"))
        hspec["index"] = dspec.value("index", 0u) + 1;
    auto h = driver_from(hspec, model->driver_dim(), seed, 1);
    if (!(h.grid() == w.grid())) h = refine_piecewise_linear(h, w.grid());
    const int order = c.value("order", 3);
    auto opts = SolverOptions::from_json(c.value("solver", json::object()));
    opts.with_jacobian = true;
    const auto s = solve_driven(*model, w, opts);
    const auto xs = directional_derivatives(*model, s, h, order);
    const auto dir = out_dir(g);
    for (const auto& x : xs) {
        auto os = open_out(dir / ("derivative_" + std::to_string(x.order) + ".csv"));
        write_derivative_csv(os, x);
    }
    json out = {{"model", model->describe()}, {"order", order}, {"versions", build_info()}};
    const double hurst = dspec.value("hurst", c.value("hurst", 0.5));
    const double t = c.value("t", 1.0);
    const auto cov = malliavin_covariance(*model, s, increment_gram(HurstParameter(hurst), w.grid()), t);
    if (!cov.is_psd()) throw NumericalError("Malliavin covariance is not positive semidefinite");
    auto ms = open_out(dir / "covariance.csv");
    write_matrix_csv(ms, cov.matrix);
    out["covariance"] = {{"t", t}, {"hurst", hurst}, {"min_eigenvalue", cov.min_eigenvalue}};
    write_json(dir / "deriv.json", out);
    return kOk;
}

XiGrid xi_from(const json& spec, std::size_t e) {
    const std::size_t points = spec.value("points", e == 1 ? 201u : 41u);
    if (spec.contains("center")) {
        const auto ctr = spec.at("center").get<std::vector<double>>();
        const auto hw = spec.at("half_width").get<std::vector<double>>();
        if (ctr.size() != e || hw.size() != e) throw ConfigError("xi box dimension does not match the state");
        return XiGrid::box(ctr, hw, points);
    }
    const double lo = spec.value("lo", -3.0), hi = spec.value("hi", 3.0);
    if (e == 1) return XiGrid::uniform(lo, hi, points);
    std::vector<double> ctr(e, 0.5 * (lo + hi)), hw(e, 0.5 * (hi - lo));
    return XiGrid::box(ctr, hw, points);
}

int cmd_density(const Globals& g) {
    const json c = load_config(g);
    const auto model = make_model(c.value("model", json{{"preset", "ou"}}));
    DensityConfig dc;
    dc.hurst = c.value("hurst", 0.5);
    HurstParameter(dc.hurst).require_lift_range();
    dc.time = c.value("t", 1.0);
    dc.m = c.value("m", 64u);
    dc.delta = c.value("delta", 2.0 * dc.hurst - 0.5);
    dc.samples = c.value("samples", 10000u);
    dc.seed = seed_of(g, c);
    dc.threads = threads_of(g, c);
    dc.xi = xi_from(c.value("xi", json::object()), model->state_dim());
    if (c.contains("solver")) {
        dc.solver = SolverOptions::from_json(c.at("solver"));
        dc.solver.with_jacobian = false;
    }
    const auto est = estimate_density(*model, dc);
    const auto dir = out_dir(g);
    auto os = open_out(dir / "density.csv");
    write_density_csv(os, est);
    json side = {{"provenance", est.provenance},
                 {"bandwidth", est.bandwidth},
                 {"samples", est.samples},
                 {"grid_mass", model->state_dim() <= 2 ? json(est.trapezoid_mass()) : json(nullptr)},
                 {"versions", build_info()}};
    if (dynamic_cast<const AffineModel*>(model.get()) && dc.hurst == 0.5) {
        const auto law = affine_law(*model, dc.hurst, dc.time);
        const auto err = sup_error(est, [&](std::span<const double> x) { return law.density(x); });
        side["reference"] = {{"sup_error", err.value}, {"at", err.location}};
    }
    write_json(dir / "density.json", side);
    return kOk;
}

int cmd_study(const Globals& g) {
    json c = load_config(g);
    if (g.seed) c["seed"] = *g.seed;
    if (g.threads) c["threads"] = *g.threads;
    auto cfg = StudyConfig::from_json(c);
    cfg.out_dir = g.out;
    const auto dir = out_dir(g);
    std::vector<MStatistic> rows;
    json report;
    bool inconclusive = false;
    if (cfg.kind == StudyKind::nfunc_stats) {
        const auto s = run_nfunc_stats(cfg);
        rows = s.rows;
        report = s.to_json();
    } else {
        const auto r = cfg.kind == StudyKind::pathwise ? run_pathwise_study(cfg)
                       : cfg.kind == StudyKind::lift   ? run_lift_study(cfg)
                                                       : run_density_study(cfg);
        rows = r.rows;
        report = r.to_json();
        inconclusive = r.inconclusive;
    }
    report["versions"] = build_info();
    report["provenance"] = {{"seed", cfg.seed}, {"threads", cfg.threads}, {"config_file", g.config_path}};
    auto os = open_out(dir / "study.csv");
    write_study_csv(os, rows);
    write_json(dir / "report.json", report);
    if (report.contains("fit") && !report.at("fit").is_null())
        std::cout << "slope " << report.at("fit").at("slope").get<double>() << " +- "
                  << report.at("fit").at("slope_stderr").get<double>() << '\n';
    if (inconclusive) {
        std::cerr << "inconclusive: " << report.value("note", std::string()) << '\n';
        return kInconclusive;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wong-Zakai approximations driven by fractional Brownian motion"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "master seed (overrides the config)");
    app.add_option("--threads", g.threads, "worker threads, 0 = hardware")->check(CLI::NonNegativeNumber);
    app.add_option("--out", g.out, "output directory");
    app.fallthrough();

    int code = kOk;
    struct Cmd {
        const char* name;
        const char* help;
        int (*fn)(const Globals&);
    };
    const Cmd cmds[] = {{"sample-fbm", "sample fBM paths on a grid", cmd_sample_fbm},
                        {"lift", "piecewise-linear rough path lift", cmd_lift},
                        {"pvar", "p-variation seminorms and distances", cmd_pvar},
                        {"nfunc", "greedy N-functional", cmd_nfunc},
                        {"solve", "driven ODE with Jacobian", cmd_solve},
                        {"deriv", "directional derivatives and Malliavin covariance", cmd_deriv},
                        {"density", "mollified density estimate", cmd_density},
                        {"study", "convergence study", cmd_study}};
    for (const auto& cmd : cmds) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->callback([&g, &code, fn = cmd.fn] { code = fn(g); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const InconclusiveError& e) {
        std::cerr << "inconclusive: " << e.what() << '\n';
        return kInconclusive;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    }
    return code;
}
