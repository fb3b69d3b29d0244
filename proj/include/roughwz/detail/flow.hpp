#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "roughwz/vector_field.hpp"

namespace roughwz::detail {

/// Right-hand side of the (y, J, K) system on one linear driver segment:
///   y' = F(y),  J' = M(y) J,  K' = -K M(y),
/// with F = sum_f u_f V_f and M = sum_f u_f grad V_f, u the segment slopes
/// (driver slopes followed by 1 for the drift).
class FlowRhs {
public:
    FlowRhs(const VectorFieldModel& model, bool with_jacobian)
        : model_(model), e_(model.state_dim()), fields_(model.field_count()), jacobian_(with_jacobian),
          order0_(fields_ * e_), order1_(with_jacobian ? fields_ * e_ * e_ : 0), slopes_(fields_), m_(e_ * e_) {}

    std::size_t state_size() const noexcept { return jacobian_ ? e_ + 2 * e_ * e_ : e_; }
    void set_slopes(std::span<const double> slopes) {
        for (std::size_t f = 0; f < fields_; ++f) slopes_[f] = slopes[f];
    }
    std::span<const double> slopes() const noexcept { return slopes_; }

    /// F(y) into out[0..e) and, with the Jacobian, M(y) into m().
    void drift_and_gradient(const double* y, double* f_out) {
        model_.derivatives(std::span<const double>(y, e_), 0, order0_);
        for (std::size_t i = 0; i < e_; ++i) {
            double v = 0.0;
            for (std::size_t f = 0; f < fields_; ++f) v += slopes_[f] * order0_[f * e_ + i];
            f_out[i] = v;
        }
        if (!jacobian_) return;
        model_.derivatives(std::span<const double>(y, e_), 1, order1_);
        const std::size_t ee = e_ * e_;
        for (std::size_t n = 0; n < ee; ++n) {
            double v = 0.0;
            for (std::size_t f = 0; f < fields_; ++f) v += slopes_[f] * order1_[f * ee + n];
            m_[n] = v;
        }
    }

    void operator()(const double* in, double* out) {
        drift_and_gradient(in, out);
        if (!jacobian_) return;
        const std::size_t e = e_, ee = e_ * e_;
        const double* jac = in + e;
        const double* inv = in + e + ee;
        double* djac = out + e;
        double* dinv = out + e + ee;
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t b = 0; b < e; ++b) {
                double mj = 0.0, km = 0.0;
                for (std::size_t a = 0; a < e; ++a) {
                    mj += m_[i * e + a] * jac[a * e + b];
                    km += inv[i * e + a] * m_[a * e + b];
                }
                djac[i * e + b] = mj;
                dinv[i * e + b] = -km;
            }
    }

    std::span<const double> m() const noexcept { return m_; }
    /// Field values from the last evaluation, (d+1) blocks of e.
    std::span<const double> fields() const noexcept { return order0_; }

private:
    const VectorFieldModel& model_;
    std::size_t e_, fields_;
    bool jacobian_;
    std::vector<double> order0_, order1_, slopes_, m_;
};

/// Slopes of driver segment j, followed by 1 for the drift.
inline void segment_slopes(std::span<const double> from, std::span<const double> to, double dt,
                           std::span<double> slopes) {
    const std::size_t d = from.size();
    for (std::size_t c = 0; c < d; ++c) slopes[c] = (to[c] - from[c]) / dt;
    slopes[d] = 1.0;
}

}  // namespace roughwz::detail
