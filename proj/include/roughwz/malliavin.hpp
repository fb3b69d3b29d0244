#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "roughwz/fbm.hpp"
#include "roughwz/grid.hpp"
#include "roughwz/ode.hpp"
#include "roughwz/vector_field.hpp"

namespace roughwz {

inline constexpr int kMaxDerivativeOrder = 3;

/// Xi_n = D_h^n y along one direction h, at the driver grid nodes.
struct DerivativePath {
    int order = 1;
    TimeGrid grid;
    std::size_t state_dim = 0;
    std::vector<double> values;  // nodes x e
    nlohmann::json provenance;

    std::span<const double> at(std::size_t node) const { return {values.data() + node * state_dim, state_dim}; }
};

/// Xi_1..Xi_order along the piecewise-linear direction h (same grid as the
/// driver). Xi_n = J_t int_0^t K_s S_n(s) where S_n collects every term of the
/// n-th order variational equation that involves only lower orders; S_n is
/// read off a Taylor jet of the vector fields, so the combinatorial
/// coefficients come out of the chain rule rather than a table.
std::vector<DerivativePath> directional_derivatives(const VectorFieldModel& model, const SolvedSystem& solved,
                                                    const SamplePath& direction, int order);
/// Only Xi_order.
DerivativePath directional_derivative(const VectorFieldModel& model, const SolvedSystem& solved,
                                      const SamplePath& direction, int order);

struct MalliavinCovariance {
    double time = 0.0;
    Eigen::MatrixXd matrix;
    double min_eigenvalue = 0.0;
    nlohmann::json provenance;

    bool is_psd() const { return min_eigenvalue >= -1e-10 * matrix.trace(); }
};

/// Gradient of y_t with respect to each driver increment (e x d per segment),
/// G_j = J_t int_{seg j} K_s sigma(y_s) ds / dt_j; zero for segments after t.
std::vector<Eigen::MatrixXd> increment_sensitivities(const VectorFieldModel& model, const SolvedSystem& solved,
                                                     std::size_t node);

/// Sigma = sum_c sum_{j,k} G_j[:,c] Gram_{jk} G_k[:,c]^T at the grid node t.
MalliavinCovariance malliavin_covariance(const VectorFieldModel& model, const SolvedSystem& solved,
                                         const IncrementGram& gram, double t);

struct NondegeneracyReport {
    std::size_t samples = 0;
    std::vector<double> quantile_levels;
    std::vector<double> min_eigenvalue_quantiles;
    double det_mean = 0.0;
    double det_stderr = 0.0;
    std::vector<double> inverse_moment_orders;
    std::vector<double> inverse_det_moments;  // E[det^{-q}], infinite if any det <= 0
    double eigenvalue_floor = 0.0;
    double flagged_fraction = 0.0;

    nlohmann::json to_json() const;
};

NondegeneracyReport nondegeneracy_report(std::span<const MalliavinCovariance> samples, double eigenvalue_floor = 1e-8,
                                         std::vector<double> inverse_orders = {1.0, 2.0});

/// CSV columns: t, xi_1..xi_e.
void write_derivative_csv(std::ostream& os, const DerivativePath& path);
void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m);

}  // namespace roughwz
