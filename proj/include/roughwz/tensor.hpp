#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace roughwz {

inline constexpr int kMaxLevel = 3;

/// Truncated tensor series (x^1, ..., x^L) over R^d, L <= 3, with the
/// implicit level-0 component equal to 1. Level k is stored densely as
/// d^k entries in row-major multi-index order.
class LevelTensors {
public:
    LevelTensors() = default;
    /// Zero tensors: the neutral element of Chen composition.
    LevelTensors(std::size_t dim, int level);

    /// Lift of a single linear segment with increment delta: x^k = delta^{(x)k} / k!.
    static LevelTensors segment(std::span<const double> delta, int level);

    std::size_t dim() const noexcept { return dim_; }
    int level() const noexcept { return level_; }

    std::span<const double> at(int k) const noexcept { return {data_.data() + offset(k), size(k)}; }
    std::span<double> at(int k) noexcept { return {data_.data() + offset(k), size(k)}; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    /// Hilbert-Schmidt norm of level k.
    double norm(int k) const noexcept;

    /// Chen composition in place: this <- this (x) right.
    void append(const LevelTensors& right);
    /// Same as append(segment(delta, level())) without materializing the segment.
    void append_segment(std::span<const double> delta);

    /// Keeps levels 1..level.
    LevelTensors truncated(int level) const;

    std::size_t offset(int k) const noexcept;
    std::size_t size(int k) const noexcept;

private:
    std::size_t dim_ = 0;
    int level_ = 0;
    std::vector<double> data_;
};

/// x^k_{s,t} = sum_{i=0}^{k} x^{k-i}_{s,u} (x) x^i_{u,t}.
LevelTensors chen_compose(const LevelTensors& left, const LevelTensors& right);

/// Levelwise difference (not a group operation; used for distances).
LevelTensors difference(const LevelTensors& a, const LevelTensors& b);

}  // namespace roughwz
