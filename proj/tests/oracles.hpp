#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's tensor or p-variation code.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include <roughwz/grid.hpp>

namespace oracle {

using Word = std::vector<std::size_t>;

// Polynomial in local time u on [0, 1].
using Poly = std::vector<double>;

inline double eval(const Poly& p, double u) {
    double v = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) v = v * u + p[i];
    return v;
}

inline std::vector<Word> words(std::size_t d, int k) {
    std::vector<Word> out{{}};
    for (int l = 0; l < k; ++l) {
        std::vector<Word> next;
        for (const auto& w : out)
            for (std::size_t i = 0; i < d; ++i) {
                auto x = w;
                x.push_back(i);
                next.push_back(x);
            }
        out = next;
    }
    return out;
}

// Iterated integrals S_w of a piecewise-linear path between nodes a <= b,
// levels 1..L, by integrating polynomials exactly segment by segment:
// S_{w i}(u) = S_{w i}(0) + delta_i * int_0^u S_w(r) dr.
inline std::map<Word, double> signature(const roughwz::SamplePath& x, std::size_t a, std::size_t b, int L) {
    const std::size_t d = x.dim();
    std::map<Word, double> value;
    value[{}] = 1.0;
    for (int k = 1; k <= L; ++k)
        for (const auto& w : words(d, k)) value[w] = 0.0;
    for (std::size_t j = a; j < b; ++j) {
        std::map<Word, Poly> poly;
        poly[{}] = {1.0};
        for (int k = 1; k <= L; ++k)
            for (const auto& w : words(d, k)) {
                Word prefix(w.begin(), w.end() - 1);
                const double delta = x.increment(j, w.back());
                const Poly& inner = poly[prefix];
                Poly p(inner.size() + 1, 0.0);
                p[0] = value[w];
                for (std::size_t n = 0; n < inner.size(); ++n) p[n + 1] = delta * inner[n] / static_cast<double>(n + 1);
                poly[w] = p;
            }
        for (auto& [w, v] : value)
            if (!w.empty()) v = eval(poly[w], 1.0);
    }
    return value;
}

inline double level_norm(const std::map<Word, double>& s, std::size_t d, int k) {
    double acc = 0.0;
    for (const auto& w : words(d, k)) acc += s.at(w) * s.at(w);
    return std::sqrt(acc);
}

// sup over all node subsets of [a, b] of sum |x^k|^q, by enumeration.
inline double brute_pvar_power(const std::function<double(std::size_t, std::size_t)>& cost, std::size_t a,
                               std::size_t b) {
    if (b <= a) return 0.0;
    const std::size_t interior = b - a - 1;
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << interior); ++mask) {
        double s = 0.0;
        std::size_t prev = a;
        for (std::size_t i = 0; i < interior; ++i)
            if (mask >> i & 1u) {
                s += cost(prev, a + 1 + i);
                prev = a + 1 + i;
            }
        s += cost(prev, b);
        best = std::max(best, s);
    }
    return best;
}

inline roughwz::SamplePath random_path(std::mt19937_64& rng, std::size_t segments, std::size_t d,
                                       bool uniform = false, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> t{0.0};
    if (uniform) {
        for (std::size_t j = 1; j <= segments; ++j) t.push_back(static_cast<double>(j) / static_cast<double>(segments));
    } else {
        std::uniform_real_distribution<double> u(0.2, 1.0);
        std::vector<double> w(segments);
        double total = 0.0;
        for (auto& v : w) total += (v = u(rng));
        double acc = 0.0;
        for (std::size_t j = 0; j + 1 < segments; ++j) t.push_back(acc += w[j] / total);
        t.push_back(1.0);
    }
    std::vector<double> values(d, 0.0);
    for (std::size_t j = 0; j < segments; ++j)
        for (std::size_t c = 0; c < d; ++c) values.push_back(values[j * d + c] + g(rng));
    return roughwz::SamplePath(roughwz::TimeGrid(t), d, values);
}

}  // namespace oracle
