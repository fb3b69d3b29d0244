#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "roughwz/grid.hpp"
#include "roughwz/tensor.hpp"

namespace roughwz {

/// Iterated-integral tensors of a path, stored per grid segment; increments
/// over unions of segments come from Chen composition.
class RoughPathLevels {
public:
    RoughPathLevels(TimeGrid grid, std::vector<LevelTensors> segments, double roughness);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return segments_.front().dim(); }
    int level() const noexcept { return segments_.front().level(); }
    /// Roughness exponent p carried as metadata.
    double roughness() const noexcept { return roughness_; }

    const LevelTensors& segment(std::size_t j) const noexcept { return segments_[j]; }
    /// x_{t_i, t_j} for node indices i <= j (zero tensors when i == j).
    LevelTensors increment(std::size_t i, std::size_t j) const;

private:
    TimeGrid grid_;
    std::vector<LevelTensors> segments_;
    double roughness_;
};

/// Node-index window [begin, end] of a grid.
struct Window {
    std::size_t begin;
    std::size_t end;
};

/// Window from times; throws ConfigError unless both are grid nodes.
Window window_at(const TimeGrid& grid, double s, double t);
Window full_window(const TimeGrid& grid);

RoughPathLevels lift_piecewise_linear(const SamplePath& path, int level, double roughness = 2.0);

/// p-variation seminorm of level k with exponent q over a window, sup over
/// partitions through grid nodes (exact O(N^2) dynamic program).
double pvar_seminorm(const RoughPathLevels& levels, int k, double q, Window window);
double pvar_seminorm(const RoughPathLevels& levels, int k, double q);

/// (sum_{k<=L} ||x^k||_{p/k-var}^{p/k})^{1/p}.
double homogeneous_pvar_norm(const RoughPathLevels& levels, double p, Window window);
double homogeneous_pvar_norm(const RoughPathLevels& levels, double p);

/// max_k ||x^k - y^k||_{p/k-var}; operands must share grid, dimension and level.
double pvar_distance(const RoughPathLevels& a, const RoughPathLevels& b, double p);

/// omega(t_i, t_j) = homogeneous norm^p over [t_i, t_j] for all node pairs.
struct ControlEvaluation {
    TimeGrid grid;
    Eigen::MatrixXd values;  // upper triangle used

    double operator()(std::size_t i, std::size_t j) const { return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
    /// max over triples of omega(s,u) + omega(u,t) - omega(s,t).
    double superadditivity_defect() const;
};

ControlEvaluation intrinsic_control(const RoughPathLevels& levels, double p);

struct NFunctionalResult {
    std::size_t count = 0;
    std::vector<double> breakpoints;  // tau_0 = 0, ..., last = 1
};

/// Greedy block count: each block ends at the first node where the
/// homogeneous norm^p over the block reaches beta.
NFunctionalResult n_functional(const RoughPathLevels& levels, double p, double beta);

/// Generalized dilation: level k mapped by A^{(x)k}, A of shape d' x d.
RoughPathLevels dilate(const RoughPathLevels& levels, const Eigen::MatrixXd& map);
RoughPathLevels dilate(const RoughPathLevels& levels, double c);

/// Residual between the closed-form level-3 increment over [0,1] and the
/// extension-sum built from levels 1-2 on partitions obtained by halving every
/// segment 0..depth times. Entry i is the residual after i halvings.
std::vector<double> level3_residuals(const SamplePath& path, int depth);
/// Residual at the finest depth.
double level3_consistency_check(const SamplePath& path, int depth = 10);

/// CSV columns: interval, level, multi_index, value (multi-index 1-based, dot separated).
void write_lift_csv(std::ostream& os, const RoughPathLevels& levels);

}  // namespace roughwz
