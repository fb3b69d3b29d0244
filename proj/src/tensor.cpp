#include "roughwz/tensor.hpp"

#include <cmath>
#include <string>

#include "roughwz/errors.hpp"

namespace roughwz {

namespace {

void check_level(int level) {
    if (level < 1 || level > kMaxLevel)
        throw ConfigError("unsupported tensor level " + std::to_string(level) + " (1..3)");
}

}  // namespace

LevelTensors::LevelTensors(std::size_t dim, int level) : dim_(dim), level_(level) {
    check_level(level);
    if (dim == 0) throw ConfigError("tensor dimension must be positive");
    data_.assign(offset(level) + size(level), 0.0);
}

std::size_t LevelTensors::offset(int k) const noexcept {
    std::size_t off = 0, block = 1;
    for (int i = 1; i < k; ++i) {
        block *= dim_;
        off += block;
    }
    return off;
}

std::size_t LevelTensors::size(int k) const noexcept {
    std::size_t block = 1;
    for (int i = 0; i < k; ++i) block *= dim_;
    return block;
}

LevelTensors LevelTensors::segment(std::span<const double> delta, int level) {
    LevelTensors out(delta.size(), level);
    const std::size_t d = delta.size();
    auto x1 = out.at(1);
    for (std::size_t a = 0; a < d; ++a) x1[a] = delta[a];
    if (level >= 2) {
        auto x2 = out.at(2);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) x2[a * d + b] = 0.5 * delta[a] * delta[b];
    }
    if (level >= 3) {
        auto x3 = out.at(3);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                for (std::size_t c = 0; c < d; ++c) x3[(a * d + b) * d + c] = delta[a] * delta[b] * delta[c] / 6.0;
    }
    return out;
}

double LevelTensors::norm(int k) const noexcept {
    double s = 0.0;
    for (double v : at(k)) s += v * v;
    return std::sqrt(s);
}

void LevelTensors::append(const LevelTensors& right) {
    if (right.dim_ != dim_ || right.level_ != level_)
        throw ConfigError("Chen composition needs matching dimension and level");
    const std::size_t d = dim_;
    // Top-down so lower levels of *this are still the left factor when used.
    if (level_ >= 3) {
        auto x3 = at(3);
        const auto l1 = at(1), l2 = at(2);
        const auto r1 = right.at(1), r2 = right.at(2), r3 = right.at(3);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                for (std::size_t c = 0; c < d; ++c) {
                    const std::size_t abc = (a * d + b) * d + c;
                    x3[abc] += r3[abc] + l2[a * d + b] * r1[c] + l1[a] * r2[b * d + c];
                }
    }
    if (level_ >= 2) {
        auto x2 = at(2);
        const auto l1 = at(1);
        const auto r1 = right.at(1), r2 = right.at(2);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) x2[a * d + b] += r2[a * d + b] + l1[a] * r1[b];
    }
    auto x1 = at(1);
    const auto r1 = right.at(1);
    for (std::size_t a = 0; a < d; ++a) x1[a] += r1[a];
}

void LevelTensors::append_segment(std::span<const double> delta) {
    const std::size_t d = dim_;
    if (delta.size() != d) throw ConfigError("segment increment has the wrong dimension");
    if (level_ >= 3) {
        auto x3 = at(3);
        const auto l1 = at(1), l2 = at(2);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) {
                const double l2ab = l2[a * d + b];
                const double half_l1a_db = 0.5 * l1[a] * delta[b];
                const double sixth_dadb = delta[a] * delta[b] / 6.0;
                for (std::size_t c = 0; c < d; ++c)
                    x3[(a * d + b) * d + c] += (sixth_dadb + l2ab + half_l1a_db) * delta[c];
            }
    }
    if (level_ >= 2) {
        auto x2 = at(2);
        const auto l1 = at(1);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) x2[a * d + b] += (0.5 * delta[a] + l1[a]) * delta[b];
    }
    auto x1 = at(1);
    for (std::size_t a = 0; a < d; ++a) x1[a] += delta[a];
}

LevelTensors LevelTensors::truncated(int level) const {
    check_level(level);
    if (level > level_) throw ConfigError("cannot raise the level by truncation");
    LevelTensors out(dim_, level);
    for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] = data_[i];
    return out;
}

LevelTensors chen_compose(const LevelTensors& left, const LevelTensors& right) {
    LevelTensors out = left;
    out.append(right);
    return out;
}

LevelTensors difference(const LevelTensors& a, const LevelTensors& b) {
    if (a.dim() != b.dim() || a.level() != b.level()) throw ConfigError("incompatible tensor operands");
    LevelTensors out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

}  // namespace roughwz
