#include "roughwz/roughpath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "roughwz/errors.hpp"

namespace roughwz {

namespace {

// Forward dynamic program for p-variation over windows [start, j].
//
// best_[k][j - start] = sup over node partitions of [start, j] of
// sum |x^k_{t_i,t_{i+1}}|^{q_k}. Running increments x_{i,j} for every i in the
// window are extended by one segment per advance(), so a full scan costs
// O(N^2) tensor updates. With a second operand the cost is taken on the
// levelwise difference of the two increments.
class PvarScanner {
public:
    PvarScanner(const RoughPathLevels& a, const RoughPathLevels* b, std::vector<double> exponents,
                std::size_t start)
        : a_(a), b_(b), q_(std::move(exponents)), start_(start), end_(start),
          levels_(static_cast<int>(q_.size())), best_(q_.size(), std::vector<double>{0.0}) {}

    std::size_t end() const noexcept { return end_; }
    bool at_last_node() const noexcept { return end_ + 1 == a_.grid().nodes(); }

    void advance() {
        const std::size_t seg = end_;
        extend(run_a_, a_.segment(seg));
        if (b_) extend(run_b_, b_->segment(seg));
        ++end_;
        for (int k = 1; k <= levels_; ++k) {
            const double q = q_[static_cast<std::size_t>(k - 1)];
            auto& best = best_[static_cast<std::size_t>(k - 1)];
            if (q <= 0.0) {
                best.push_back(0.0);
                continue;
            }
            double top = 0.0;
            for (std::size_t i = 0; i < run_a_.size(); ++i) {
                const double cost = std::pow(level_norm(i, k), q);
                top = std::max(top, best[i] + cost);
            }
            best.push_back(top);
        }
    }

    /// sup sum |x^k|^{q_k} over [start, end].
    double powered(int k) const { return best_[static_cast<std::size_t>(k - 1)].back(); }

    double total() const {
        double s = 0.0;
        for (int k = 1; k <= levels_; ++k)
            if (q_[static_cast<std::size_t>(k - 1)] > 0.0) s += powered(k);
        return s;
    }

private:
    void extend(std::vector<LevelTensors>& run, const LevelTensors& segment) {
        const LevelTensors seg = segment.level() == levels_ ? segment : segment.truncated(levels_);
        for (auto& r : run) r.append(seg);
        run.push_back(seg);
    }

    double level_norm(std::size_t i, int k) const {
        if (!b_) return run_a_[i].norm(k);
        const auto x = run_a_[i].at(k), y = run_b_[i].at(k);
        double s = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) s += (x[n] - y[n]) * (x[n] - y[n]);
        return std::sqrt(s);
    }

    const RoughPathLevels& a_;
    const RoughPathLevels* b_;
    std::vector<double> q_;
    std::size_t start_, end_;
    int levels_;
    std::vector<std::vector<double>> best_;
    std::vector<LevelTensors> run_a_, run_b_;
};

void check_window(const RoughPathLevels& levels, Window w) {
    if (w.begin > w.end || w.end >= levels.grid().nodes())
        throw ConfigError("window [" + std::to_string(w.begin) + "," + std::to_string(w.end) +
                          "] is not a node window of the grid");
}

std::vector<double> homogeneous_exponents(const RoughPathLevels& levels, double p) {
    if (!(p >= 1.0)) throw ConfigError("p must be at least 1");
    if (levels.level() > static_cast<int>(std::floor(p)))
        throw ConfigError("tracked level " + std::to_string(levels.level()) + " exceeds [p] for p = " +
                          std::to_string(p));
    std::vector<double> q;
    for (int k = 1; k <= levels.level(); ++k) q.push_back(p / k);
    return q;
}

PvarScanner scan_window(const RoughPathLevels& a, const RoughPathLevels* b, std::vector<double> q, Window w) {
    PvarScanner scanner(a, b, std::move(q), w.begin);
    while (scanner.end() < w.end) scanner.advance();
    return scanner;
}

}  // namespace

RoughPathLevels::RoughPathLevels(TimeGrid grid, std::vector<LevelTensors> segments, double roughness)
    : grid_(std::move(grid)), segments_(std::move(segments)), roughness_(roughness) {
    if (segments_.size() != grid_.segments()) throw ConfigError("need one tensor series per grid segment");
    for (const auto& s : segments_)
        if (s.dim() != segments_.front().dim() || s.level() != segments_.front().level())
            throw ConfigError("segment tensors must share dimension and level");
}

LevelTensors RoughPathLevels::increment(std::size_t i, std::size_t j) const {
    if (i > j || j >= grid_.nodes()) throw ConfigError("increment needs node indices i <= j");
    LevelTensors out(dim(), level());
    for (std::size_t s = i; s < j; ++s) out.append(segments_[s]);
    return out;
}

Window window_at(const TimeGrid& grid, double s, double t) {
    auto i = grid.index_of(s), j = grid.index_of(t);
    if (!i || !j) throw ConfigError("window endpoints must be grid nodes");
    if (*i > *j) throw ConfigError("window needs s <= t");
    return {*i, *j};
}

Window full_window(const TimeGrid& grid) { return {0, grid.nodes() - 1}; }

RoughPathLevels lift_piecewise_linear(const SamplePath& path, int level, double roughness) {
    if (level < 1 || level > kMaxLevel)
        throw ConfigError("unsupported lift level " + std::to_string(level) + " (1..3)");
    const std::size_t d = path.dim();
    std::vector<LevelTensors> segments;
    segments.reserve(path.grid().segments());
    std::vector<double> delta(d);
    for (std::size_t j = 0; j < path.grid().segments(); ++j) {
        for (std::size_t c = 0; c < d; ++c) delta[c] = path.increment(j, c);
        segments.push_back(LevelTensors::segment(delta, level));
    }
    return RoughPathLevels(path.grid(), std::move(segments), roughness);
}

double pvar_seminorm(const RoughPathLevels& levels, int k, double q, Window window) {
    check_window(levels, window);
    if (k < 1 || k > levels.level()) throw ConfigError("level index out of range");
    if (!(q >= 1.0)) throw ConfigError("variation exponent q must be at least 1");
    std::vector<double> exps(static_cast<std::size_t>(k), 0.0);
    exps.back() = q;
    const auto scanner = scan_window(levels, nullptr, std::move(exps), window);
    return std::pow(scanner.powered(k), 1.0 / q);
}

double pvar_seminorm(const RoughPathLevels& levels, int k, double q) {
    return pvar_seminorm(levels, k, q, full_window(levels.grid()));
}

double homogeneous_pvar_norm(const RoughPathLevels& levels, double p, Window window) {
    check_window(levels, window);
    const auto scanner = scan_window(levels, nullptr, homogeneous_exponents(levels, p), window);
    return std::pow(scanner.total(), 1.0 / p);
}

double homogeneous_pvar_norm(const RoughPathLevels& levels, double p) {
    return homogeneous_pvar_norm(levels, p, full_window(levels.grid()));
}

double pvar_distance(const RoughPathLevels& a, const RoughPathLevels& b, double p) {
    if (!(a.grid() == b.grid())) throw ConfigError("p-variation distance needs a common grid; refine first");
    if (a.dim() != b.dim() || a.level() != b.level())
        throw ConfigError("p-variation distance needs matching dimension and level");
    const auto q = homogeneous_exponents(a, p);
    const auto scanner = scan_window(a, &b, q, full_window(a.grid()));
    double dist = 0.0;
    for (int k = 1; k <= a.level(); ++k)
        dist = std::max(dist, std::pow(scanner.powered(k), 1.0 / q[static_cast<std::size_t>(k - 1)]));
    return dist;
}

double ControlEvaluation::superadditivity_defect() const {
    const auto n = values.rows();
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < n; ++s)
        for (Eigen::Index u = s; u < n; ++u)
            for (Eigen::Index t = u; t < n; ++t)
                worst = std::max(worst, values(s, u) + values(u, t) - values(s, t));
    return worst;
}

ControlEvaluation intrinsic_control(const RoughPathLevels& levels, double p) {
    const auto q = homogeneous_exponents(levels, p);
    const std::size_t n = levels.grid().nodes();
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        PvarScanner scanner(levels, nullptr, q, i);
        while (scanner.end() + 1 < n) {
            scanner.advance();
            omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(scanner.end())) = scanner.total();
        }
    }
    return ControlEvaluation{levels.grid(), std::move(omega)};
}

NFunctionalResult n_functional(const RoughPathLevels& levels, double p, double beta) {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    const auto q = homogeneous_exponents(levels, p);
    const auto& grid = levels.grid();
    NFunctionalResult result;
    result.breakpoints.push_back(0.0);
    std::size_t start = 0;
    while (true) {
        PvarScanner scanner(levels, nullptr, q, start);
        bool hit = false;
        while (!scanner.at_last_node()) {
            scanner.advance();
            if (scanner.total() >= beta) {
                hit = true;
                break;
            }
        }
        if (!hit || scanner.at_last_node()) {
            result.breakpoints.push_back(1.0);
            break;
        }
        ++result.count;
        start = scanner.end();
        result.breakpoints.push_back(grid[start]);
    }
    return result;
}

namespace {

// Applies map (rows x cols) along every mode of a dense order-k tensor.
std::vector<double> map_tensor(std::span<const double> x, int k, std::size_t d, const Eigen::MatrixXd& map) {
    const std::size_t out_d = static_cast<std::size_t>(map.rows());
    std::vector<double> cur(x.begin(), x.end());
    std::vector<std::size_t> shape(static_cast<std::size_t>(k), d);
    for (int mode = 0; mode < k; ++mode) {
        std::size_t outer = 1, inner = 1;
        for (int m = 0; m < mode; ++m) outer *= shape[static_cast<std::size_t>(m)];
        for (int m = mode + 1; m < k; ++m) inner *= shape[static_cast<std::size_t>(m)];
        std::vector<double> next(outer * out_d * inner, 0.0);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t r = 0; r < out_d; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    const double a = map(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                    if (a == 0.0) continue;
                    const double* src = cur.data() + (o * d + c) * inner;
                    double* dst = next.data() + (o * out_d + r) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += a * src[i];
                }
        shape[static_cast<std::size_t>(mode)] = out_d;
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

RoughPathLevels dilate(const RoughPathLevels& levels, const Eigen::MatrixXd& map) {
    if (static_cast<std::size_t>(map.cols()) != levels.dim() || map.rows() == 0)
        throw ConfigError("dilation map must have as many columns as the path dimension");
    const std::size_t out_d = static_cast<std::size_t>(map.rows());
    std::vector<LevelTensors> segments;
    segments.reserve(levels.grid().segments());
    for (std::size_t j = 0; j < levels.grid().segments(); ++j) {
        LevelTensors out(out_d, levels.level());
        for (int k = 1; k <= levels.level(); ++k) {
            const auto mapped = map_tensor(levels.segment(j).at(k), k, levels.dim(), map);
            std::copy(mapped.begin(), mapped.end(), out.at(k).begin());
        }
        segments.push_back(std::move(out));
    }
    return RoughPathLevels(levels.grid(), std::move(segments), levels.roughness());
}

RoughPathLevels dilate(const RoughPathLevels& levels, double c) {
    const auto d = static_cast<Eigen::Index>(levels.dim());
    return dilate(levels, Eigen::MatrixXd(c * Eigen::MatrixXd::Identity(d, d)));
}

std::vector<double> level3_residuals(const SamplePath& path, int depth) {
    if (path.grid().segments() > 64) throw ConfigError("level-3 consistency check supports at most 64 segments");
    if (depth < 0 || depth > 16) throw ConfigError("refinement depth must lie in 0..16");
    const std::size_t d = path.dim();
    const auto exact = lift_piecewise_linear(path, 3).increment(0, path.grid().nodes() - 1);
    const auto target = exact.at(3);

    std::vector<double> residuals;
    std::vector<double> delta(d);
    for (int level = 0; level <= depth; ++level) {
        const std::size_t pieces = std::size_t{1} << level;
        LevelTensors running(d, 2);
        std::vector<double> sum(d * d * d, 0.0);
        for (std::size_t j = 0; j < path.grid().segments(); ++j) {
            for (std::size_t c = 0; c < d; ++c) delta[c] = path.increment(j, c) / static_cast<double>(pieces);
            const auto piece = LevelTensors::segment(delta, 2);
            const auto p2 = piece.at(2);
            for (std::size_t l = 0; l < pieces; ++l) {
                const auto r1 = running.at(1), r2 = running.at(2);
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b < d; ++b)
                        for (std::size_t c = 0; c < d; ++c)
                            sum[(a * d + b) * d + c] += r2[a * d + b] * delta[c] + r1[a] * p2[b * d + c];
                running.append(piece);
            }
        }
        double r = 0.0;
        for (std::size_t i = 0; i < sum.size(); ++i) r += (sum[i] - target[i]) * (sum[i] - target[i]);
        residuals.push_back(std::sqrt(r));
    }
    return residuals;
}

double level3_consistency_check(const SamplePath& path, int depth) {
    return level3_residuals(path, depth).back();
}

void write_lift_csv(std::ostream& os, const RoughPathLevels& levels) {
    os << "interval,level,multi_index,value\n";
    os.precision(17);
    const std::size_t d = levels.dim();
    for (std::size_t j = 0; j < levels.grid().segments(); ++j) {
        for (int k = 1; k <= levels.level(); ++k) {
            const auto x = levels.segment(j).at(k);
            for (std::size_t flat = 0; flat < x.size(); ++flat) {
                std::string idx;
                std::size_t rem = flat, block = x.size() / d;
                for (int m = 0; m < k; ++m) {
                    if (m) idx += '.';
                    idx += std::to_string(rem / block + 1);
                    rem %= block;
                    if (block > 1) block /= d;
                }
                os << j << ',' << k << ',' << idx << ',' << x[flat] << '\n';
            }
        }
    }
}

}  // namespace roughwz
