#include <cstring>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <roughwz/density.hpp>
#include <roughwz/errors.hpp>
#include <roughwz/experiments.hpp>
#include <roughwz/fbm.hpp>
#include <roughwz/malliavin.hpp>
#include <roughwz/ode.hpp>
#include <roughwz/roughpath.hpp>
#include <roughwz/version.hpp>

namespace py = pybind11;
using namespace roughwz;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

SamplePath to_path(const Array& values, const std::vector<double>& times) {
    if (values.ndim() != 2) throw ConfigError("path values must be a (nodes, dim) array");
    const auto nodes = static_cast<std::size_t>(values.shape(0)), dim = static_cast<std::size_t>(values.shape(1));
    std::vector<double> v(values.data(), values.data() + nodes * dim);
    TimeGrid grid = times.empty() ? TimeGrid::uniform(nodes - 1) : TimeGrid(times);
    return SamplePath(std::move(grid), dim, std::move(v));
}

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
    Array out(shape);
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

py::dict levels_dict(const LevelTensors& x) {
    py::dict d;
    const auto dim = static_cast<py::ssize_t>(x.dim());
    for (int k = 1; k <= x.level(); ++k) {
        std::vector<py::ssize_t> shape(static_cast<std::size_t>(k), dim);
        d[py::int_(k)] = to_array(std::vector<double>(x.at(k).begin(), x.at(k).end()), shape);
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_roughwz, m) {
    m.doc() = "Wong-Zakai approximations, rough path lifts and mollified densities";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InconclusiveError>(m, "InconclusiveError", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    m.def("build_info", [] { return build_info().dump(); });
    m.def("fbm_covariance", &fbm_covariance, py::arg("hurst"), py::arg("s"), py::arg("t"));
    m.def(
        "sample_fbm",
        [](double hurst, std::size_t m, std::size_t dim, std::size_t count, std::uint64_t seed, unsigned threads) {
            const auto paths = sample_fbm(HurstParameter(hurst), TimeGrid::uniform(m), dim, count, seed, threads);
            std::vector<double> flat;
            flat.reserve(count * (m + 1) * dim);
            for (const auto& p : paths) flat.insert(flat.end(), p.values().begin(), p.values().end());
            return to_array(flat, {static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(m + 1),
                                   static_cast<py::ssize_t>(dim)});
        },
        py::arg("hurst"), py::arg("m"), py::arg("dim") = 1, py::arg("count") = 1, py::arg("seed") = 1,
        py::arg("threads") = 1);

    m.def(
        "signature",
        [](const Array& values, int level, const std::vector<double>& times) {
            const auto path = to_path(values, times);
            const auto lift = lift_piecewise_linear(path, level);
            return levels_dict(lift.increment(0, path.grid().nodes() - 1));
        },
        py::arg("values"), py::arg("level") = 2, py::arg("times") = std::vector<double>{});
    m.def(
        "pvar_seminorm",
        [](const Array& values, int k, double q, int level, const std::vector<double>& times) {
            return pvar_seminorm(lift_piecewise_linear(to_path(values, times), level), k, q);
        },
        py::arg("values"), py::arg("k"), py::arg("q"), py::arg("level") = 3, py::arg("times") = std::vector<double>{});
    m.def(
        "homogeneous_norm",
        [](const Array& values, double p, int level, const std::vector<double>& times) {
            return homogeneous_pvar_norm(lift_piecewise_linear(to_path(values, times), level, p), p);
        },
        py::arg("values"), py::arg("p"), py::arg("level") = 2, py::arg("times") = std::vector<double>{});
    m.def(
        "n_functional",
        [](const Array& values, double p, double beta, int level, const std::vector<double>& times) {
            const auto r = n_functional(lift_piecewise_linear(to_path(values, times), level, p), p, beta);
            return py::make_tuple(r.count, r.breakpoints);
        },
        py::arg("values"), py::arg("p"), py::arg("beta"), py::arg("level") = 2,
        py::arg("times") = std::vector<double>{});

    m.def(
        "_solve",
        [](const std::string& model_json, const Array& values, const std::string& solver_json,
           const std::vector<double>& times) {
            const auto model = make_model(nlohmann::json::parse(model_json));
            const auto s = solve_driven(*model, to_path(values, times),
                                        SolverOptions::from_json(nlohmann::json::parse(solver_json)));
            const auto n = static_cast<py::ssize_t>(s.grid.nodes()), e = static_cast<py::ssize_t>(s.state_dim);
            py::dict out;
            out["t"] = std::vector<double>(s.grid.times().begin(), s.grid.times().end());
            out["y"] = to_array(s.y, {n, e});
            if (s.has_jacobian) {
                out["J"] = to_array(s.jac, {n, e, e});
                out["K"] = to_array(s.inv, {n, e, e});
                out["max_jk_residual"] = s.max_jk_residual();
            }
            return out;
        },
        py::arg("model_json"), py::arg("values"), py::arg("solver_json") = "{}",
        py::arg("times") = std::vector<double>{});
    m.def(
        "_derivatives",
        [](const std::string& model_json, const Array& values, const Array& direction, int order) {
            const auto model = make_model(nlohmann::json::parse(model_json));
            const auto w = to_path(values, {});
            const auto s = solve_driven(*model, w);
            py::list out;
            for (const auto& x : directional_derivatives(*model, s, to_path(direction, {}), order))
                out.append(to_array(x.values, {static_cast<py::ssize_t>(x.grid.nodes()),
                                               static_cast<py::ssize_t>(x.state_dim)}));
            return out;
        },
        py::arg("model_json"), py::arg("values"), py::arg("direction"), py::arg("order") = 1);
    m.def(
        "_malliavin_covariance",
        [](const std::string& model_json, const Array& values, double hurst, double t) {
            const auto model = make_model(nlohmann::json::parse(model_json));
            const auto w = to_path(values, {});
            const auto cov = malliavin_covariance(*model, solve_driven(*model, w), increment_gram(HurstParameter(hurst), w.grid()), t);
            const auto e = static_cast<py::ssize_t>(cov.matrix.rows());
            Array out({e, e});
            for (py::ssize_t i = 0; i < e; ++i)
                for (py::ssize_t j = 0; j < e; ++j) out.mutable_at(i, j) = cov.matrix(i, j);
            return out;
        },
        py::arg("model_json"), py::arg("values"), py::arg("hurst"), py::arg("t") = 1.0);

    m.def(
        "_reference_density",
        [](const std::string& model_json, double hurst, double t, const std::vector<double>& xi) {
            return reference_density(*make_model(nlohmann::json::parse(model_json)), hurst, t, xi);
        },
        py::arg("model_json"), py::arg("hurst"), py::arg("t"), py::arg("xi"));
    m.def(
        "_estimate_density",
        [](const std::string& model_json, double hurst, double t, std::size_t mm, double delta, std::size_t samples,
           double lo, double hi, std::size_t points, std::uint64_t seed, unsigned threads) {
            const auto model = make_model(nlohmann::json::parse(model_json));
            DensityConfig c;
            c.hurst = hurst;
            c.time = t;
            c.m = mm;
            c.delta = delta;
            c.samples = samples;
            c.xi = XiGrid::uniform(lo, hi, points);
            c.seed = seed;
            c.threads = threads;
            const auto est = [&] {
                py::gil_scoped_release release;
                return estimate_density(*model, c);
            }();
            py::dict out;
            out["xi"] = est.xi.axes.front();
            out["p_hat"] = est.values;
            out["stderr"] = est.stderrs;
            out["bandwidth"] = est.bandwidth;
            return out;
        },
        py::arg("model_json"), py::arg("hurst"), py::arg("t"), py::arg("m"), py::arg("delta"), py::arg("samples"),
        py::arg("lo"), py::arg("hi"), py::arg("points"), py::arg("seed"), py::arg("threads"));

    m.def("_run_study", [](const std::string& config_json) {
        const auto cfg = StudyConfig::from_json(nlohmann::json::parse(config_json));
        nlohmann::json report;
        {
            py::gil_scoped_release release;
            switch (cfg.kind) {
                case StudyKind::pathwise: report = run_pathwise_study(cfg).to_json(); break;
                case StudyKind::lift: report = run_lift_study(cfg).to_json(); break;
                case StudyKind::density: report = run_density_study(cfg).to_json(); break;
                case StudyKind::nfunc_stats: report = run_nfunc_stats(cfg).to_json(); break;
            }
        }
        return report.dump();
    });
    m.def(
        "fit_rate",
        [](const std::vector<double>& ms, const std::vector<double>& errors) {
            if (ms.size() != errors.size()) throw ConfigError("m and error lists differ in length");
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < ms.size(); ++i) pts.emplace_back(ms[i], errors[i]);
            const auto f = fit_rate(pts);
            return py::make_tuple(f.slope, f.slope_stderr);
        },
        py::arg("m"), py::arg("errors"));
}
