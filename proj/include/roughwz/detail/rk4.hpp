#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace roughwz::detail {

/// Scratch space for classical RK4 on a flat state.
struct Rk4Workspace {
    std::vector<double> k1, k2, k3, k4, tmp;

    void resize(std::size_t n) {
        k1.resize(n);
        k2.resize(n);
        k3.resize(n);
        k4.resize(n);
        tmp.resize(n);
    }
};

/// Integrates an autonomous system state' = rhs(state) over `duration` with
/// `substeps` equal RK4 steps. rhs(const double* in, double* out).
template <class Rhs>
void rk4_integrate(std::span<double> state, double duration, int substeps, Rhs&& rhs, Rk4Workspace& ws) {
    const std::size_t n = state.size();
    ws.resize(n);
    const double h = duration / substeps;
    double* x = state.data();
    for (int s = 0; s < substeps; ++s) {
        rhs(x, ws.k1.data());
        for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
        rhs(ws.tmp.data(), ws.k2.data());
        for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
        rhs(ws.tmp.data(), ws.k3.data());
        for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = x[i] + h * ws.k3[i];
        rhs(ws.tmp.data(), ws.k4.data());
        for (std::size_t i = 0; i < n; ++i)
            x[i] += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

}  // namespace roughwz::detail
