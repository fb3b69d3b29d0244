#include "roughwz/ode.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "roughwz/detail/flow.hpp"
#include "roughwz/detail/rk4.hpp"
#include "roughwz/errors.hpp"

namespace roughwz {

nlohmann::json SolverOptions::to_json() const {
    return {{"initial_substeps", initial_substeps}, {"max_substeps", max_substeps}, {"tolerance", tolerance},
            {"jk_tolerance", jk_tolerance},         {"adaptive", adaptive},         {"with_jacobian", with_jacobian}};
}

SolverOptions SolverOptions::from_json(const nlohmann::json& j) {
    SolverOptions o;
    if (j.is_null()) return o;
    o.initial_substeps = j.value("initial_substeps", o.initial_substeps);
    o.max_substeps = j.value("max_substeps", o.max_substeps);
    o.tolerance = j.value("tolerance", o.tolerance);
    o.jk_tolerance = j.value("jk_tolerance", o.jk_tolerance);
    o.adaptive = j.value("adaptive", o.adaptive);
    o.with_jacobian = j.value("with_jacobian", o.with_jacobian);
    o.validate();
    return o;
}

void SolverOptions::validate() const {
    if (initial_substeps < 1 || max_substeps < initial_substeps)
        throw ConfigError("solver needs 1 <= initial_substeps <= max_substeps");
    if (!(tolerance > 0.0) || !(jk_tolerance > 0.0)) throw ConfigError("solver tolerances must be positive");
}

std::span<const double> SolvedSystem::jac_at(std::size_t node) const {
    const std::size_t ee = state_dim * state_dim;
    return {jac.data() + node * ee, ee};
}

std::span<const double> SolvedSystem::inv_at(std::size_t node) const {
    const std::size_t ee = state_dim * state_dim;
    return {inv.data() + node * ee, ee};
}

namespace {

double jk_residual_of(const double* jac, const double* inv, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = 0; i < e; ++i)
        for (std::size_t b = 0; b < e; ++b) {
            double v = (i == b) ? -1.0 : 0.0;
            for (std::size_t a = 0; a < e; ++a) v += jac[i * e + a] * inv[a * e + b];
            s += v * v;
        }
    return std::sqrt(s);
}

void check_dims(const VectorFieldModel& model, const SamplePath& driver) {
    if (driver.dim() != model.driver_dim())
        throw ConfigError("driver dimension " + std::to_string(driver.dim()) + " does not match model (" +
                          std::to_string(model.driver_dim()) + ")");
}

std::vector<double> initial_state(std::size_t e, bool with_jacobian) {
    std::vector<double> state(with_jacobian ? e + 2 * e * e : e, 0.0);
    if (with_jacobian)
        for (std::size_t i = 0; i < e; ++i) {
            state[e + i * e + i] = 1.0;
            state[e + e * e + i * e + i] = 1.0;
        }
    return state;
}

struct SegmentOutcome {
    int substeps;
    double error;
};

class SegmentStepper {
public:
    SegmentStepper(const VectorFieldModel& model, bool with_jacobian)
        : rhs_(model, with_jacobian), e_(model.state_dim()), jacobian_(with_jacobian),
          slopes_(model.field_count()), coarse_(rhs_.state_size()), fine_(rhs_.state_size()) {}

    void set_segment(std::span<const double> from, std::span<const double> to, double dt) {
        detail::segment_slopes(from, to, dt, slopes_);
        rhs_.set_slopes(slopes_);
    }

    void fixed(std::span<double> state, double dt, int substeps) {
        detail::rk4_integrate(state, dt, substeps, rhs_, ws_);
    }

    SegmentOutcome adaptive(std::span<double> state, double dt, const SolverOptions& opt, std::size_t segment) {
        int n = opt.initial_substeps;
        std::copy(state.begin(), state.end(), coarse_.begin());
        detail::rk4_integrate(coarse_, dt, n, rhs_, ws_);
        while (true) {
            std::copy(state.begin(), state.end(), fine_.begin());
            detail::rk4_integrate(fine_, dt, 2 * n, rhs_, ws_);
            double diff = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < fine_.size(); ++i) {
                diff = std::max(diff, std::abs(fine_[i] - coarse_[i]));
                scale = std::max(scale, std::abs(fine_[i]));
            }
            const double err = diff / 15.0 / (1.0 + scale);
            const double jk = jacobian_ ? jk_residual_of(fine_.data() + e_, fine_.data() + e_ + e_ * e_, e_) : 0.0;
            if (err <= opt.tolerance && jk <= opt.jk_tolerance) {
                std::copy(fine_.begin(), fine_.end(), state.begin());
                return {2 * n, err};
            }
            if (4 * n > opt.max_substeps)
                throw IntegrationError(segment, "tolerance unreachable within " + std::to_string(opt.max_substeps) +
                                                    " substeps (error " + std::to_string(err) + ", |JK - Id| " +
                                                    std::to_string(jk) + ")");
            n *= 2;
            std::swap(coarse_, fine_);
        }
    }

private:
    detail::FlowRhs rhs_;
    std::size_t e_;
    bool jacobian_;
    std::vector<double> slopes_, coarse_, fine_;
    detail::Rk4Workspace ws_;
};

SolvedSystem make_solved(const VectorFieldModel& model, const SamplePath& driver, bool with_jacobian) {
    SolvedSystem out{driver.grid()};
    out.state_dim = model.state_dim();
    out.has_jacobian = with_jacobian;
    out.driver_dim = driver.dim();
    out.driver.assign(driver.values().begin(), driver.values().end());
    const std::size_t nodes = driver.grid().nodes(), e = out.state_dim;
    out.y.assign(nodes * e, 0.0);
    if (with_jacobian) {
        out.jac.assign(nodes * e * e, 0.0);
        out.inv.assign(nodes * e * e, 0.0);
    }
    out.substeps.assign(driver.grid().segments(), 0);
    out.error_estimates.assign(driver.grid().segments(), 0.0);
    return out;
}

void store_node(SolvedSystem& out, std::size_t node, std::span<const double> state) {
    const std::size_t e = out.state_dim, ee = e * e;
    std::copy_n(state.begin(), e, out.y.begin() + static_cast<std::ptrdiff_t>(node * e));
    if (out.has_jacobian) {
        std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(e), ee, out.jac.begin() + static_cast<std::ptrdiff_t>(node * ee));
        std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(e + ee), ee,
                    out.inv.begin() + static_cast<std::ptrdiff_t>(node * ee));
    }
}

}  // namespace

double SolvedSystem::jk_residual(std::size_t node) const {
    if (!has_jacobian) throw ConfigError("solution was computed without the Jacobian");
    return jk_residual_of(jac_at(node).data(), inv_at(node).data(), state_dim);
}

double SolvedSystem::max_jk_residual() const {
    double r = 0.0;
    for (std::size_t i = 0; i < grid.nodes(); ++i) r = std::max(r, jk_residual(i));
    return r;
}

SolvedSystem solve_driven(const VectorFieldModel& model, const SamplePath& driver, const SolverOptions& options) {
    check_dims(model, driver);
    options.validate();
    if (!options.adaptive) {
        std::vector<int> steps(driver.grid().segments(), options.initial_substeps);
        return solve_driven_fixed(model, driver, steps, options.with_jacobian);
    }
    SolvedSystem out = make_solved(model, driver, options.with_jacobian);
    SegmentStepper stepper(model, options.with_jacobian);
    auto state = initial_state(model.state_dim(), options.with_jacobian);
    store_node(out, 0, state);
    const auto& grid = driver.grid();
    for (std::size_t j = 0; j < grid.segments(); ++j) {
        stepper.set_segment(driver.at(j), driver.at(j + 1), grid.step(j));
        const auto outcome = stepper.adaptive(state, grid.step(j), options, j);
        out.substeps[j] = outcome.substeps;
        out.error_estimates[j] = outcome.error;
        store_node(out, j + 1, state);
    }
    return out;
}

SolvedSystem solve_driven_fixed(const VectorFieldModel& model, const SamplePath& driver, std::span<const int> substeps,
                                bool with_jacobian) {
    check_dims(model, driver);
    const auto& grid = driver.grid();
    if (substeps.size() != grid.segments()) throw ConfigError("need one substep count per segment");
    SolvedSystem out = make_solved(model, driver, with_jacobian);
    SegmentStepper stepper(model, with_jacobian);
    auto state = initial_state(model.state_dim(), with_jacobian);
    store_node(out, 0, state);
    for (std::size_t j = 0; j < grid.segments(); ++j) {
        if (substeps[j] < 1) throw ConfigError("substep counts must be positive");
        stepper.set_segment(driver.at(j), driver.at(j + 1), grid.step(j));
        stepper.fixed(state, grid.step(j), substeps[j]);
        out.substeps[j] = substeps[j];
        store_node(out, j + 1, state);
    }
    return out;
}

std::vector<double> solve_state_at(const VectorFieldModel& model, const SamplePath& driver, double t,
                                   const SolverOptions& options) {
    check_dims(model, driver);
    options.validate();
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("evaluation time must lie in (0,1]");
    const auto& grid = driver.grid();
    const std::size_t last = grid.segment_containing(t);
    SegmentStepper stepper(model, false);
    auto state = initial_state(model.state_dim(), false);
    for (std::size_t j = 0; j <= last; ++j) {
        const double dt = (j == last) ? t - grid[j] : grid.step(j);
        if (dt <= 0.0) break;
        stepper.set_segment(driver.at(j), driver.at(j + 1), grid.step(j));
        if (options.adaptive)
            stepper.adaptive(state, dt, options, j);
        else
            stepper.fixed(state, dt, options.initial_substeps);
    }
    return state;
}

std::vector<double> flow_segment(const VectorFieldModel& model, std::span<const double> y0,
                                 std::span<const double> increment, double dt, int substeps) {
    if (y0.size() != model.state_dim() || increment.size() != model.driver_dim())
        throw ConfigError("flow_segment dimension mismatch");
    if (dt == 0.0 || substeps < 1) throw ConfigError("flow_segment needs nonzero duration and substeps >= 1");
    detail::FlowRhs rhs(model, false);
    std::vector<double> slopes(model.field_count());
    for (std::size_t c = 0; c < increment.size(); ++c) slopes[c] = increment[c] / dt;
    slopes.back() = 1.0;
    rhs.set_slopes(slopes);
    std::vector<double> state(y0.begin(), y0.end());
    detail::Rk4Workspace ws;
    detail::rk4_integrate(state, dt, substeps, rhs, ws);
    return state;
}

double evaluate_solution_sup_distance(const SolvedSystem& a, const SolvedSystem& b) {
    if (a.state_dim != b.state_dim) throw ConfigError("solutions have different state dimensions");
    const bool a_coarse = a.grid.nodes() <= b.grid.nodes();
    const SolvedSystem& coarse = a_coarse ? a : b;
    const SolvedSystem& fine = a_coarse ? b : a;
    std::vector<std::size_t> idx;
    try {
        idx = embed_nodes(coarse.grid, fine.grid);
    } catch (const RefinementError&) {
        throw ConfigError("solutions live on grids that are neither equal nor nested");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto ya = coarse.y_at(i), yb = fine.y_at(idx[i]);
        double s = 0.0;
        for (std::size_t k = 0; k < ya.size(); ++k) s += (ya[k] - yb[k]) * (ya[k] - yb[k]);
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

void write_trajectory_csv(std::ostream& os, const SolvedSystem& solved) {
    const std::size_t e = solved.state_dim;
    os << "t";
    for (std::size_t i = 0; i < e; ++i) os << ",y_" << i + 1;
    if (solved.has_jacobian) {
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t k = 0; k < e; ++k) os << ",J_" << i + 1 << '_' << k + 1;
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t k = 0; k < e; ++k) os << ",K_" << i + 1 << '_' << k + 1;
    }
    os << '\n';
    os.precision(17);
    for (std::size_t n = 0; n < solved.grid.nodes(); ++n) {
        os << solved.grid[n];
        for (double v : solved.y_at(n)) os << ',' << v;
        if (solved.has_jacobian) {
            for (double v : solved.jac_at(n)) os << ',' << v;
            for (double v : solved.inv_at(n)) os << ',' << v;
        }
        os << '\n';
    }
}

}  // namespace roughwz
