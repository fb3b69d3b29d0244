#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace roughwz {

/// Ordered time nodes 0 = t_0 < t_1 < ... < t_N = 1.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times);

    /// Equal partition {j/n : 0 <= j <= n}.
    static TimeGrid uniform(std::size_t segments);

    std::size_t nodes() const noexcept { return times_.size(); }
    std::size_t segments() const noexcept { return times_.size() - 1; }
    double operator[](std::size_t i) const noexcept { return times_[i]; }
    std::span<const double> times() const noexcept { return times_; }
    double step(std::size_t segment) const noexcept { return times_[segment + 1] - times_[segment]; }
    double mesh() const noexcept;
    bool is_uniform(double rel_tol = 1e-12) const noexcept;

    /// Index of the node equal to t (within tol), if any.
    std::optional<std::size_t> index_of(double t, double tol = 1e-12) const noexcept;
    /// Index of the segment containing t, with t == 1 mapped to the last segment.
    std::size_t segment_containing(double t) const noexcept;

    bool operator==(const TimeGrid& other) const noexcept { return times_ == other.times_; }

private:
    std::vector<double> times_;
};

/// Values of a d-dimensional path at the nodes of a grid, linear in between.
class SamplePath {
public:
    SamplePath(TimeGrid grid, std::size_t dim, std::vector<double> values);
    /// Zero path.
    SamplePath(TimeGrid grid, std::size_t dim);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> at(std::size_t node) const noexcept {
        return {values_.data() + node * dim_, dim_};
    }
    std::span<double> at(std::size_t node) noexcept { return {values_.data() + node * dim_, dim_}; }
    double operator()(std::size_t node, std::size_t component) const noexcept {
        return values_[node * dim_ + component];
    }
    std::span<const double> values() const noexcept { return values_; }

    /// Piecewise-linear evaluation at an arbitrary t in [0,1].
    std::vector<double> evaluate(double t) const;

    /// Increment over segment j, component c.
    double increment(std::size_t segment, std::size_t component) const noexcept {
        return values_[(segment + 1) * dim_ + component] - values_[segment * dim_ + component];
    }

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::vector<double> values_;
};

/// Linear interpolation of a path onto a finer grid containing its nodes.
/// Reproduces the same piecewise-linear function, so solves on either grid agree.
SamplePath refine_piecewise_linear(const SamplePath& path, const TimeGrid& fine);

/// Indices of coarse nodes inside fine; throws RefinementError if some node is missing.
std::vector<std::size_t> embed_nodes(const TimeGrid& coarse, const TimeGrid& fine, double tol = 1e-12);

}  // namespace roughwz
