#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "roughwz/grid.hpp"
#include "roughwz/vector_field.hpp"

namespace roughwz {

struct SolverOptions {
    /// Substeps per driver segment on the first attempt.
    int initial_substeps = 4;
    /// Doubling stops here; a segment that still fails raises IntegrationError.
    int max_substeps = 256;
    /// Step-doubling error estimate per segment, relative to 1 + |state|.
    double tolerance = 1e-11;
    /// Gate on ||J K - Id|| at every node.
    double jk_tolerance = 1e-8;
    /// false: integrate every segment with exactly initial_substeps, no checks.
    bool adaptive = true;
    bool with_jacobian = true;

    nlohmann::json to_json() const;
    /// Throws ConfigError.
    void validate() const;
    static SolverOptions from_json(const nlohmann::json& j);
};

/// Trajectories of (y, J, K) at the driver grid nodes for one driver.
struct SolvedSystem {
    TimeGrid grid;
    std::size_t state_dim = 0;
    std::size_t driver_dim = 0;
    bool has_jacobian = false;
    std::vector<double> driver;  // nodes x d, the driver values used
    std::vector<double> y;     // nodes x e
    std::vector<double> jac;   // nodes x e x e, row-major
    std::vector<double> inv;   // nodes x e x e, K = J^{-1}
    std::vector<int> substeps;               // per segment
    std::vector<double> error_estimates;     // per segment, 0 when not adaptive

    std::span<const double> y_at(std::size_t node) const { return {y.data() + node * state_dim, state_dim}; }
    std::span<const double> driver_at(std::size_t node) const {
        return {driver.data() + node * driver_dim, driver_dim};
    }
    std::span<const double> jac_at(std::size_t node) const;
    std::span<const double> inv_at(std::size_t node) const;
    /// Hilbert-Schmidt norm of J K - Id at a node.
    double jk_residual(std::size_t node) const;
    double max_jk_residual() const;
};

/// Solves dy = sigma(y) dw + b(y) dt, y_0 = 0, together with the Jacobian J
/// and its inverse K, driven by the piecewise-linear path `driver`. Each
/// segment is an autonomous ODE integrated by RK4 with step doubling.
SolvedSystem solve_driven(const VectorFieldModel& model, const SamplePath& driver, const SolverOptions& options = {});

/// Same as solve_driven with prescribed substeps per segment and no error control.
/// The discrete solve map is then smooth in the driver (used for finite differences).
SolvedSystem solve_driven_fixed(const VectorFieldModel& model, const SamplePath& driver,
                                std::span<const int> substeps, bool with_jacobian);

/// y_t at an arbitrary t in (0,1], integrating the partial last segment.
std::vector<double> solve_state_at(const VectorFieldModel& model, const SamplePath& driver, double t,
                                   const SolverOptions& options = {});

/// Flow of y over one linear piece with driver increment `increment` and duration dt
/// (both may be negative to run backwards).
std::vector<double> flow_segment(const VectorFieldModel& model, std::span<const double> y0,
                                 std::span<const double> increment, double dt, int substeps);

/// max over common nodes of |y_a - y_b|; grids must be equal or nested.
double evaluate_solution_sup_distance(const SolvedSystem& a, const SolvedSystem& b);

/// CSV columns: t, y_1..y_e, then J_ij and K_ij (row-major) when present.
void write_trajectory_csv(std::ostream& os, const SolvedSystem& solved);

}  // namespace roughwz
