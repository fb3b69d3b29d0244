#pragma once

// Finite differences of the discrete solve map y(w + eps h), used as the
// reference for directional derivatives. The substep counts are frozen so
// the map is smooth in eps.

#include <cmath>
#include <vector>

#include <roughwz/ode.hpp>

namespace oracle {

inline std::vector<double> shifted_solution(const roughwz::VectorFieldModel& model, const roughwz::SamplePath& w,
                                            const roughwz::SamplePath& h, double eps, std::span<const int> substeps) {
    std::vector<double> v(w.values().begin(), w.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += eps * h.values()[i];
    const auto s = roughwz::solve_driven_fixed(model, roughwz::SamplePath(w.grid(), w.dim(), v), substeps, false);
    return s.y;
}

/// Central difference of order n (1..3) along h with step eps; nodes x e values.
inline std::vector<double> central_difference(const roughwz::VectorFieldModel& model, const roughwz::SamplePath& w,
                                              const roughwz::SamplePath& h, int n, double eps,
                                              std::span<const int> substeps) {
    auto f = [&](double k) { return shifted_solution(model, w, h, k * eps, substeps); };
    std::vector<double> out;
    if (n == 1) {
        const auto p = f(1), m = f(-1);
        for (std::size_t i = 0; i < p.size(); ++i) out.push_back((p[i] - m[i]) / (2.0 * eps));
    } else if (n == 2) {
        const auto p = f(1), z = f(0), m = f(-1);
        for (std::size_t i = 0; i < p.size(); ++i) out.push_back((p[i] - 2.0 * z[i] + m[i]) / (eps * eps));
    } else {
        const auto p2 = f(2), p1 = f(1), m1 = f(-1), m2 = f(-2);
        for (std::size_t i = 0; i < p1.size(); ++i)
            out.push_back((p2[i] - 2.0 * p1[i] + 2.0 * m1[i] - m2[i]) / (2.0 * eps * eps * eps));
    }
    return out;
}

/// (4 D(eps/2) - D(eps)) / 3.
inline std::vector<double> richardson(const roughwz::VectorFieldModel& model, const roughwz::SamplePath& w,
                                      const roughwz::SamplePath& h, int n, double eps, std::span<const int> substeps) {
    const auto a = central_difference(model, w, h, n, eps, substeps);
    const auto b = central_difference(model, w, h, n, eps / 2.0, substeps);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (4.0 * b[i] - a[i]) / 3.0;
    return out;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct FdComparison {
    double relative_error;  // recursion vs Richardson-extrapolated differences at eps
    double observed_order;  // from the eps sequence (e0, e0/2, e0/4)
};

inline FdComparison compare_with_differences(const roughwz::VectorFieldModel& model, const roughwz::SamplePath& w,
                                             const roughwz::SamplePath& h, int n, std::span<const double> xi,
                                             std::span<const int> substeps, double eps = 0.0,
                                             double order_eps = 0.1) {
    // roundoff grows like 1e-16 / eps^n
    if (eps <= 0.0) eps = n == 1 ? 1e-3 : n == 2 ? 1e-2 : 3e-2;
    const auto ref = richardson(model, w, h, n, eps, substeps);
    FdComparison c;
    c.relative_error = max_abs_diff(xi, ref) / std::max(max_abs(ref), 1e-300);
    std::vector<double> errs;
    for (double e : {order_eps, order_eps / 2.0, order_eps / 4.0})
        errs.push_back(max_abs_diff(central_difference(model, w, h, n, e, substeps), xi));
    c.observed_order = std::min(std::log2(errs[0] / errs[1]), std::log2(errs[1] / errs[2]));
    return c;
}

}  // namespace oracle
