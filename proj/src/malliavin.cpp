#include "roughwz/malliavin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "roughwz/detail/flow.hpp"
#include "roughwz/detail/rk4.hpp"
#include "roughwz/errors.hpp"

namespace roughwz {

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// Ordered compositions of k into positive parts.
std::vector<std::vector<int>> compositions(int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int rest) -> void {
        if (rest == 0) {
            out.push_back(cur);
            return;
        }
        for (int part = 1; part <= rest; ++part) {
            cur.push_back(part);
            self(self, rest - part);
            cur.pop_back();
        }
    };
    rec(rec, k);
    return out;
}

// out += scale * T[a_1, ..., a_l] with T an order-l derivative block [i][a_1..a_l].
void contract_add(const double* tensor, std::size_t e, const std::vector<const double*>& args, double scale,
                  double* out) {
    const std::size_t l = args.size();
    std::size_t per = 1;
    for (std::size_t m = 0; m < l; ++m) per *= e;
    for (std::size_t flat = 0; flat < per; ++flat) {
        double prod = scale;
        std::size_t rem = flat;
        for (std::size_t m = l; m-- > 0;) {
            prod *= args[m][rem % e];
            rem /= e;
        }
        if (prod == 0.0) continue;
        for (std::size_t i = 0; i < e; ++i) out[i] += tensor[i * per + flat] * prod;
    }
}

// Augmented system (y, J, K, z_1..z_n) on one segment, with Xi_k = J z_k and
// z_k' = K S_k. S_k is k! times the eps^k coefficient of
//   F_u(Y(eps)) + eps F_v(Y(eps)),  Y(eps) = y + sum_{i<k} eps^i Xi_i / i!,
// leaving out the linear term grad F_u Xi_k that the Jacobian carries.
class DerivativeRhs {
public:
    DerivativeRhs(const VectorFieldModel& model, int order)
        : model_(model), flow_(model, true), e_(model.state_dim()), fields_(model.field_count()), order_(order),
          u_(fields_), v_(fields_), combos_(static_cast<std::size_t>(order) + 1) {
        for (int l = 0; l <= order_; ++l) {
            derivs_.emplace_back(fields_ * model.tensor_size(l));
            tu_.emplace_back(model.tensor_size(l));
            tv_.emplace_back(model.tensor_size(l));
        }
        for (int k = 1; k <= order_; ++k) combos_[static_cast<std::size_t>(k)] = compositions(k);
        xi_.assign(static_cast<std::size_t>(order_) + 1, std::vector<double>(e_));
        jet_.assign(static_cast<std::size_t>(order_) + 1, std::vector<double>(e_));
        source_.assign(e_, 0.0);
    }

    std::size_t state_size() const { return e_ + 2 * e_ * e_ + static_cast<std::size_t>(order_) * e_; }

    void set_slopes(std::span<const double> driver, std::span<const double> direction) {
        std::copy(driver.begin(), driver.end(), u_.begin());
        std::copy(direction.begin(), direction.end(), v_.begin());
        flow_.set_slopes(u_);
    }

    void operator()(const double* in, double* out) {
        flow_(in, out);
        const std::size_t ee = e_ * e_;
        const double* jac = in + e_;
        const double* inv = in + e_ + ee;
        const double* z = in + e_ + 2 * ee;
        double* dz = out + e_ + 2 * ee;

        for (int l = 0; l <= order_; ++l) {
            auto& buf = derivs_[static_cast<std::size_t>(l)];
            model_.derivatives(std::span<const double>(in, e_), l, buf);
            const std::size_t block = tu_[static_cast<std::size_t>(l)].size();
            auto& tu = tu_[static_cast<std::size_t>(l)];
            auto& tv = tv_[static_cast<std::size_t>(l)];
            std::fill(tu.begin(), tu.end(), 0.0);
            std::fill(tv.begin(), tv.end(), 0.0);
            for (std::size_t f = 0; f < fields_; ++f) {
                const double* src = buf.data() + f * block;
                if (u_[f] != 0.0)
                    for (std::size_t n = 0; n < block; ++n) tu[n] += u_[f] * src[n];
                if (v_[f] != 0.0)
                    for (std::size_t n = 0; n < block; ++n) tv[n] += v_[f] * src[n];
            }
        }

        for (int k = 1; k <= order_; ++k) {
            const std::size_t ku = static_cast<std::size_t>(k);
            auto& xi = xi_[ku];
            for (std::size_t i = 0; i < e_; ++i) {
                double s = 0.0;
                for (std::size_t a = 0; a < e_; ++a) s += jac[i * e_ + a] * z[(ku - 1) * e_ + a];
                xi[i] = s;
            }
            const double inv_fact = 1.0 / factorial(k);
            for (std::size_t i = 0; i < e_; ++i) jet_[ku][i] = xi[i] * inv_fact;
        }

        std::vector<const double*> args;
        for (int k = 1; k <= order_; ++k) {
            std::fill(source_.begin(), source_.end(), 0.0);
            // eps^k coefficient of F_u(Y) without the linear Xi_k term
            for (const auto& comp : combos_[static_cast<std::size_t>(k)]) {
                if (comp.size() == 1) continue;
                args.clear();
                for (int part : comp) args.push_back(jet_[static_cast<std::size_t>(part)].data());
                const int l = static_cast<int>(comp.size());
                contract_add(tu_[static_cast<std::size_t>(l)].data(), e_, args, 1.0 / factorial(l), source_.data());
            }
            // eps^{k-1} coefficient of F_v(Y)
            if (k == 1) {
                for (std::size_t i = 0; i < e_; ++i) source_[i] += tv_[0][i];
            } else {
                for (const auto& comp : combos_[static_cast<std::size_t>(k - 1)]) {
                    args.clear();
                    for (int part : comp) args.push_back(jet_[static_cast<std::size_t>(part)].data());
                    const int l = static_cast<int>(comp.size());
                    contract_add(tv_[static_cast<std::size_t>(l)].data(), e_, args, 1.0 / factorial(l), source_.data());
                }
            }
            const double scale = factorial(k);
            double* dzk = dz + static_cast<std::size_t>(k - 1) * e_;
            for (std::size_t i = 0; i < e_; ++i) {
                double s = 0.0;
                for (std::size_t a = 0; a < e_; ++a) s += inv[i * e_ + a] * source_[a];
                dzk[i] = scale * s;
            }
        }
    }

private:
    const VectorFieldModel& model_;
    detail::FlowRhs flow_;
    std::size_t e_, fields_;
    int order_;
    std::vector<double> u_, v_;
    std::vector<std::vector<std::vector<int>>> combos_;
    std::vector<std::vector<double>> derivs_, tu_, tv_, xi_, jet_;
    std::vector<double> source_;
};

void load_node_state(const SolvedSystem& solved, std::size_t node, std::span<double> state) {
    const std::size_t e = solved.state_dim, ee = e * e;
    std::copy_n(solved.y_at(node).begin(), e, state.begin());
    std::copy_n(solved.jac_at(node).begin(), ee, state.begin() + static_cast<std::ptrdiff_t>(e));
    std::copy_n(solved.inv_at(node).begin(), ee, state.begin() + static_cast<std::ptrdiff_t>(e + ee));
}

void check_solved(const VectorFieldModel& model, const SolvedSystem& solved) {
    if (!solved.has_jacobian) throw ConfigError("derivative computations need a solve with the Jacobian");
    if (solved.state_dim != model.state_dim() || solved.driver_dim != model.driver_dim())
        throw ConfigError("solved system does not match the model dimensions");
}

}  // namespace

std::vector<DerivativePath> directional_derivatives(const VectorFieldModel& model, const SolvedSystem& solved,
                                                    const SamplePath& direction, int order) {
    check_solved(model, solved);
    if (order < 1 || order > kMaxDerivativeOrder)
        throw ConfigError("derivative order must lie in 1..3, got " + std::to_string(order));
    if (order > model.derivative_order() - 1)
        throw ConfigError("derivative order exceeds the model's declared smoothness");
    if (!(direction.grid() == solved.grid)) throw ConfigError("direction must live on the driver grid");
    if (direction.dim() != model.driver_dim()) throw ConfigError("direction dimension does not match the driver");

    const std::size_t e = model.state_dim(), d = model.driver_dim(), ee = e * e;
    const auto& grid = solved.grid;
    DerivativeRhs rhs(model, order);
    std::vector<double> state(rhs.state_size(), 0.0);
    std::vector<double> u(d + 1), v(d + 1, 0.0);
    detail::Rk4Workspace ws;

    std::vector<DerivativePath> out;
    for (int k = 1; k <= order; ++k)
        out.push_back(DerivativePath{k, grid, e, std::vector<double>(grid.nodes() * e, 0.0),
                                     {{"order", k}, {"model", model.name()}}});

    for (std::size_t j = 0; j < grid.segments(); ++j) {
        load_node_state(solved, j, state);
        const double dt = grid.step(j);
        detail::segment_slopes(solved.driver_at(j), solved.driver_at(j + 1), dt, u);
        detail::segment_slopes(direction.at(j), direction.at(j + 1), dt, v);
        v[d] = 0.0;
        rhs.set_slopes(u, v);
        detail::rk4_integrate(state, dt, std::max(1, solved.substeps[j]), rhs, ws);
        const auto jac = solved.jac_at(j + 1);
        for (int k = 1; k <= order; ++k) {
            const double* z = state.data() + e + 2 * ee + static_cast<std::size_t>(k - 1) * e;
            double* dst = out[static_cast<std::size_t>(k - 1)].values.data() + (j + 1) * e;
            for (std::size_t i = 0; i < e; ++i) {
                double s = 0.0;
                for (std::size_t a = 0; a < e; ++a) s += jac[i * e + a] * z[a];
                dst[i] = s;
            }
        }
    }
    return out;
}

DerivativePath directional_derivative(const VectorFieldModel& model, const SolvedSystem& solved,
                                      const SamplePath& direction, int order) {
    auto all = directional_derivatives(model, solved, direction, order);
    return std::move(all.back());
}

std::vector<Eigen::MatrixXd> increment_sensitivities(const VectorFieldModel& model, const SolvedSystem& solved,
                                                     std::size_t node) {
    check_solved(model, solved);
    const auto& grid = solved.grid;
    if (node >= grid.nodes()) throw ConfigError("node index out of range");
    const std::size_t e = model.state_dim(), d = model.driver_dim(), ee = e * e;
    const auto ei = static_cast<Eigen::Index>(e), di = static_cast<Eigen::Index>(d);

    // state: y, J, K, Q (e x d) with Q' = K sigma(y) / dt over the current segment
    detail::FlowRhs flow(model, true);
    const std::size_t base = e + 2 * ee;
    std::vector<double> state(base + e * d, 0.0);
    std::vector<double> u(d + 1);
    double inv_dt = 0.0;
    auto rhs = [&](const double* in, double* out) {
        flow(in, out);
        const auto fields = flow.fields();
        const double* inv = in + e + ee;
        for (std::size_t i = 0; i < e; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t a = 0; a < e; ++a) s += inv[i * e + a] * fields[c * e + a];
                out[base + i * d + c] = s * inv_dt;
            }
    };
    detail::Rk4Workspace ws;

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jac_t(
        solved.jac_at(node).data(), ei, ei);
    std::vector<Eigen::MatrixXd> sens(grid.segments(), Eigen::MatrixXd::Zero(ei, di));
    for (std::size_t j = 0; j < node; ++j) {
        load_node_state(solved, j, state);
        std::fill(state.begin() + static_cast<std::ptrdiff_t>(base), state.end(), 0.0);
        const double dt = grid.step(j);
        inv_dt = 1.0 / dt;
        detail::segment_slopes(solved.driver_at(j), solved.driver_at(j + 1), dt, u);
        flow.set_slopes(u);
        detail::rk4_integrate(state, dt, std::max(1, solved.substeps[j]), rhs, ws);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> q(
            state.data() + base, ei, di);
        sens[j] = jac_t * q;
    }
    return sens;
}

MalliavinCovariance malliavin_covariance(const VectorFieldModel& model, const SolvedSystem& solved,
                                         const IncrementGram& gram, double t) {
    const auto node = solved.grid.index_of(t);
    if (!node) throw ConfigError("covariance time must be a grid node");
    if (!(gram.grid == solved.grid)) throw ConfigError("Gram matrix does not match the driver grid");
    const auto sens = increment_sensitivities(model, solved, *node);
    const auto e = static_cast<Eigen::Index>(model.state_dim());
    const auto n = static_cast<Eigen::Index>(*node);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(e, e);
    if (n > 0) {
        const Eigen::MatrixXd g = gram.matrix.topLeftCorner(n, n);
        for (std::size_t c = 0; c < model.driver_dim(); ++c) {
            Eigen::MatrixXd h(e, n);
            for (Eigen::Index j = 0; j < n; ++j) h.col(j) = sens[static_cast<std::size_t>(j)].col(static_cast<Eigen::Index>(c));
            sigma += h * g * h.transpose();
        }
    }
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
    return MalliavinCovariance{t, sigma, eig.eigenvalues().minCoeff(),
                               {{"time", t}, {"segments", solved.grid.segments()}, {"model", model.name()}}};
}

nlohmann::json NondegeneracyReport::to_json() const {
    auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json inv = nlohmann::json::array();
    for (std::size_t i = 0; i < inverse_moment_orders.size(); ++i)
        inv.push_back({{"q", inverse_moment_orders[i]}, {"value", finite_or_null(inverse_det_moments[i])}});
    return {{"samples", samples},
            {"quantile_levels", quantile_levels},
            {"min_eigenvalue_quantiles", min_eigenvalue_quantiles},
            {"det_mean", det_mean},
            {"det_stderr", det_stderr},
            {"inverse_det_moments", inv},
            {"eigenvalue_floor", eigenvalue_floor},
            {"flagged_fraction", flagged_fraction}};
}

NondegeneracyReport nondegeneracy_report(std::span<const MalliavinCovariance> samples, double eigenvalue_floor,
                                         std::vector<double> inverse_orders) {
    if (samples.empty()) throw ConfigError("nondegeneracy report needs at least one sample");
    NondegeneracyReport r;
    r.samples = samples.size();
    r.eigenvalue_floor = eigenvalue_floor;
    r.quantile_levels = {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0};
    r.inverse_moment_orders = std::move(inverse_orders);

    std::vector<double> mins, dets;
    std::size_t flagged = 0;
    for (const auto& s : samples) {
        mins.push_back(s.min_eigenvalue);
        dets.push_back(s.matrix.determinant());
        if (s.min_eigenvalue < eigenvalue_floor) ++flagged;
    }
    r.flagged_fraction = static_cast<double>(flagged) / static_cast<double>(samples.size());

    std::sort(mins.begin(), mins.end());
    for (double q : r.quantile_levels) {
        const double pos = q * static_cast<double>(mins.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, mins.size() - 1);
        r.min_eigenvalue_quantiles.push_back(mins[lo] + (pos - static_cast<double>(lo)) * (mins[hi] - mins[lo]));
    }

    const double n = static_cast<double>(dets.size());
    double mean = 0.0;
    for (double v : dets) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : dets) var += (v - mean) * (v - mean);
    r.det_mean = mean;
    r.det_stderr = dets.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;

    for (double q : r.inverse_moment_orders) {
        double acc = 0.0;
        bool finite = true;
        for (double v : dets) {
            if (v <= 0.0) {
                finite = false;
                break;
            }
            acc += std::pow(v, -q);
        }
        r.inverse_det_moments.push_back(finite ? acc / n : std::numeric_limits<double>::infinity());
    }
    return r;
}

void write_derivative_csv(std::ostream& os, const DerivativePath& path) {
    os << "t";
    for (std::size_t i = 0; i < path.state_dim; ++i) os << ",xi_" << i + 1;
    os << '\n';
    os.precision(17);
    for (std::size_t n = 0; n < path.grid.nodes(); ++n) {
        os << path.grid[n];
        for (double v : path.at(n)) os << ',' << v;
        os << '\n';
    }
}

void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m) {
    os.precision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
        os << '\n';
    }
}

}  // namespace roughwz
