#include "roughwz/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "roughwz/errors.hpp"

namespace roughwz {

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw ConfigError("time grid needs at least two nodes");
    if (times_.front() != 0.0) throw ConfigError("time grid must start at 0");
    if (times_.back() != 1.0) throw ConfigError("time grid must end at 1");
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!(times_[i] > times_[i - 1]))
            throw ConfigError("time grid not strictly increasing at node " + std::to_string(i));
    }
}

TimeGrid TimeGrid::uniform(std::size_t segments) {
    if (segments == 0) throw ConfigError("uniform grid needs at least one segment");
    std::vector<double> t(segments + 1);
    for (std::size_t j = 0; j <= segments; ++j) t[j] = static_cast<double>(j) / static_cast<double>(segments);
    t.back() = 1.0;
    return TimeGrid(std::move(t));
}

double TimeGrid::mesh() const noexcept {
    double h = 0.0;
    for (std::size_t j = 0; j < segments(); ++j) h = std::max(h, step(j));
    return h;
}

bool TimeGrid::is_uniform(double rel_tol) const noexcept {
    const double h = 1.0 / static_cast<double>(segments());
    for (std::size_t j = 0; j < segments(); ++j)
        if (std::abs(step(j) - h) > rel_tol * h) return false;
    return true;
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const noexcept {
    auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
    if (it != times_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - times_.begin());
    return std::nullopt;
}

std::size_t TimeGrid::segment_containing(double t) const noexcept {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t idx = static_cast<std::size_t>(it - times_.begin());
    if (idx == 0) return 0;
    return std::min(idx - 1, segments() - 1);
}

SamplePath::SamplePath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(std::move(grid)), dim_(dim), values_(std::move(values)) {
    if (dim_ == 0) throw ConfigError("path dimension must be positive");
    if (values_.size() != grid_.nodes() * dim_) throw ConfigError("path needs one value per grid node");
    for (std::size_t c = 0; c < dim_; ++c)
        if (values_[c] != 0.0) throw ConfigError("paths must start at the origin");
}

SamplePath::SamplePath(TimeGrid grid, std::size_t dim)
    : SamplePath(grid, dim, std::vector<double>(grid.nodes() * dim, 0.0)) {}

std::vector<double> SamplePath::evaluate(double t) const {
    std::vector<double> out(dim_);
    const std::size_t j = grid_.segment_containing(t);
    const double lambda = (t - grid_[j]) / grid_.step(j);
    for (std::size_t c = 0; c < dim_; ++c)
        out[c] = (*this)(j, c) + lambda * increment(j, c);
    return out;
}

std::vector<std::size_t> embed_nodes(const TimeGrid& coarse, const TimeGrid& fine, double tol) {
    std::vector<std::size_t> idx(coarse.nodes());
    for (std::size_t i = 0; i < coarse.nodes(); ++i) {
        auto k = fine.index_of(coarse[i], tol);
        if (!k) throw RefinementError("node " + std::to_string(coarse[i]) + " is not in the fine grid");
        idx[i] = *k;
    }
    return idx;
}

SamplePath refine_piecewise_linear(const SamplePath& path, const TimeGrid& fine) {
    const auto shared = embed_nodes(path.grid(), fine);
    const std::size_t d = path.dim();
    std::vector<double> values(fine.nodes() * d);
    for (std::size_t j = 0; j < path.grid().segments(); ++j) {
        const std::size_t lo = shared[j], hi = shared[j + 1];
        const double t0 = fine[lo], span = fine[hi] - fine[lo];
        for (std::size_t k = lo; k <= hi; ++k) {
            const double lambda = (fine[k] - t0) / span;
            for (std::size_t c = 0; c < d; ++c)
                values[k * d + c] = path(j, c) + lambda * path.increment(j, c);
        }
        for (std::size_t c = 0; c < d; ++c) values[hi * d + c] = path(j + 1, c);
    }
    return SamplePath(fine, d, std::move(values));
}

}  // namespace roughwz
