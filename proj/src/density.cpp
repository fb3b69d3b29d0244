#include "roughwz/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <unsupported/Eigen/MatrixFunctions>

#include "roughwz/errors.hpp"
#include "roughwz/fbm.hpp"

namespace roughwz {

namespace {

constexpr double kFlushExponent = 40.0;

double kernel_norm(double rho, std::size_t e) {
    return std::pow(2.0 * std::numbers::pi * rho * rho, -0.5 * static_cast<double>(e));
}

void require_sorted(const std::vector<double>& axis) {
    if (axis.empty()) throw ConfigError("xi axis is empty");
    for (std::size_t i = 1; i < axis.size(); ++i)
        if (!(axis[i] > axis[i - 1])) throw ConfigError("xi axis must be strictly increasing");
}

}  // namespace

double gaussian_kernel(std::span<const double> x, double rho) {
    if (!(rho > 0.0)) throw ConfigError("bandwidth must be positive");
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    const double q = r2 / (2.0 * rho * rho);
    if (q > kFlushExponent) return 0.0;
    return kernel_norm(rho, x.size()) * std::exp(-q);
}

XiGrid XiGrid::uniform(double lo, double hi, std::size_t count) {
    if (count == 0) throw ConfigError("xi grid needs at least one point");
    if (count > 1 && !(hi > lo)) throw ConfigError("xi grid needs hi > lo");
    std::vector<double> axis(count);
    for (std::size_t i = 0; i < count; ++i)
        axis[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return XiGrid{{std::move(axis)}};
}

XiGrid XiGrid::box(std::span<const double> center, std::span<const double> half_width, std::size_t count) {
    if (center.size() != half_width.size() || center.empty()) throw ConfigError("xi box dimension mismatch");
    XiGrid g;
    for (std::size_t a = 0; a < center.size(); ++a)
        g.axes.push_back(uniform(center[a] - half_width[a], center[a] + half_width[a], count).axes.front());
    return g;
}

XiGrid XiGrid::single(std::span<const double> point) {
    XiGrid g;
    for (double v : point) g.axes.push_back({v});
    return g;
}

std::size_t XiGrid::size() const noexcept {
    if (axes.empty()) return 0;
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return n;
}

std::vector<double> XiGrid::point(std::size_t index) const {
    std::vector<double> p(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
        p[a] = axes[a][index % axes[a].size()];
        index /= axes[a].size();
    }
    return p;
}

double DensityEstimate::trapezoid_mass() const {
    const std::size_t e = xi.dim();
    if (e == 0 || e > 2) throw ConfigError("trapezoid mass needs a 1- or 2-dimensional grid");
    auto weights = [](const std::vector<double>& axis) {
        std::vector<double> w(axis.size(), 0.0);
        for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
            const double h = 0.5 * (axis[i + 1] - axis[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        return w;
    };
    const auto w0 = weights(xi.axes[0]);
    if (e == 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < w0.size(); ++i) s += w0[i] * values[i];
        return s;
    }
    const auto w1 = weights(xi.axes[1]);
    double s = 0.0;
    for (std::size_t i = 0; i < w0.size(); ++i)
        for (std::size_t j = 0; j < w1.size(); ++j) s += w0[i] * w1[j] * values[i * w1.size() + j];
    return s;
}

KernelAccumulator::KernelAccumulator(const XiGrid& xi, double rho)
    : xi_(std::make_shared<const XiGrid>(xi)), rho_(rho), norm_(0.0), cutoff_(0.0) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("bandwidth must be positive");
    if (xi.dim() == 0) throw ConfigError("xi grid is empty");
    for (const auto& a : xi.axes) require_sorted(a);
    norm_ = kernel_norm(rho, xi.dim());
    cutoff_ = rho * std::sqrt(2.0 * kFlushExponent);
    sum_.resize(xi.size());
    sum_sq_.resize(xi.size());
    lo_.resize(xi.dim());
    hi_.resize(xi.dim());
    idx_.resize(xi.dim());
    diff_.resize(xi.dim());
}

void KernelAccumulator::add(std::span<const double> y) {
    const auto& axes = xi_->axes;
    const std::size_t e = axes.size();
    if (y.size() != e) throw ConfigError("sample dimension does not match the xi grid");
    ++count_;
    for (std::size_t a = 0; a < e; ++a) {
        if (!std::isfinite(y[a])) throw NumericalError("non-finite sample in density estimate");
        const auto& ax = axes[a];
        lo_[a] = static_cast<std::size_t>(std::lower_bound(ax.begin(), ax.end(), y[a] - cutoff_) - ax.begin());
        hi_[a] = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), y[a] + cutoff_) - ax.begin());
        if (lo_[a] >= hi_[a]) return;
        idx_[a] = lo_[a];
    }
    const double inv2 = 1.0 / (2.0 * rho_ * rho_);
    while (true) {
        double r2 = 0.0;
        std::size_t flat = 0;
        for (std::size_t a = 0; a < e; ++a) {
            const double d = axes[a][idx_[a]] - y[a];
            r2 += d * d;
            flat = flat * axes[a].size() + idx_[a];
        }
        const double q = r2 * inv2;
        if (q <= kFlushExponent) {
            const double k = norm_ * std::exp(-q);
            sum_[flat].add(k);
            sum_sq_[flat].add(k * k);
        }
        std::size_t a = e;
        while (a-- > 0) {
            if (++idx_[a] < hi_[a]) break;
            idx_[a] = lo_[a];
        }
        if (a == static_cast<std::size_t>(-1)) break;
    }
}

void KernelAccumulator::merge(const KernelAccumulator& other) {
    if (other.sum_.size() != sum_.size() || other.rho_ != rho_) throw ConfigError("incompatible accumulators");
    for (std::size_t i = 0; i < sum_.size(); ++i) {
        sum_[i].merge(other.sum_[i]);
        sum_sq_[i].merge(other.sum_sq_[i]);
    }
    count_ += other.count_;
}

DensityEstimate KernelAccumulator::finish(double time) const {
    DensityEstimate est;
    est.time = time;
    est.bandwidth = rho_;
    est.xi = *xi_;
    est.samples = count_;
    est.values.resize(sum_.size());
    est.stderrs.resize(sum_.size());
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < sum_.size(); ++i) {
        if (count_ == 0) {
            est.values[i] = std::numeric_limits<double>::quiet_NaN();
            est.stderrs[i] = std::numeric_limits<double>::infinity();
            continue;
        }
        const double mean = sum_[i].value() / n;
        est.values[i] = mean;
        if (count_ < 2) {
            est.stderrs[i] = std::numeric_limits<double>::infinity();
        } else {
            const double var = std::max(0.0, sum_sq_[i].value() / n - mean * mean) * n / (n - 1.0);
            est.stderrs[i] = std::sqrt(var / n);
        }
    }
    return est;
}

struct CoupledDensityBatch::Impl {
    std::shared_ptr<const VectorFieldModel> model;
    double hurst, time;
    std::vector<std::size_t> schedule;
    std::vector<TimeGrid> grids;
    std::vector<double> bandwidths;
    XiGrid xi;
    SolverOptions solver;
    std::uint64_t seed;
    unsigned threads;
    FbmSampler sampler;
    std::vector<KernelAccumulator> totals;
    std::size_t done = 0;
};

CoupledDensityBatch::CoupledDensityBatch(std::shared_ptr<const VectorFieldModel> model, double hurst, double time,
                                         std::vector<std::size_t> schedule, std::size_t sample_m,
                                         std::vector<double> bandwidths, XiGrid xi, SolverOptions solver,
                                         std::uint64_t seed, unsigned threads) {
    if (!model) throw ConfigError("density batch needs a model");
    if (!(time > 0.0 && time <= 1.0)) throw ConfigError("evaluation time must lie in (0,1]");
    if (schedule.empty() || schedule.size() != bandwidths.size())
        throw ConfigError("schedule and bandwidths must be non-empty and of equal length");
    if (xi.dim() != model->state_dim()) throw ConfigError("xi grid dimension must equal the state dimension");
    for (auto m : schedule)
        if (m == 0 || sample_m % m != 0) throw ConfigError("every m must divide the sampling resolution");
    solver.with_jacobian = false;
    HurstParameter h(hurst);
    TimeGrid fine = TimeGrid::uniform(sample_m);
    impl_ = std::unique_ptr<Impl>(new Impl{model, hurst, time, schedule, {}, bandwidths, xi, solver, seed,
                                           resolve_threads(threads), FbmSampler(h, fine, model->driver_dim()),
                                           {}, 0});
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        impl_->grids.push_back(TimeGrid::uniform(schedule[i]));
        impl_->totals.emplace_back(impl_->xi, bandwidths[i]);
    }
}

CoupledDensityBatch::~CoupledDensityBatch() = default;

std::size_t CoupledDensityBatch::paths() const noexcept { return impl_->done; }
const std::vector<std::size_t>& CoupledDensityBatch::schedule() const noexcept { return impl_->schedule; }

void CoupledDensityBatch::run(std::size_t paths) {
    if (paths == 0) return;
    auto& s = *impl_;
    const std::size_t first = s.done;
    const std::size_t workers = worker_count(paths, s.threads);
    std::vector<std::vector<KernelAccumulator>> local(workers);
    for (auto& l : local)
        for (std::size_t i = 0; i < s.schedule.size(); ++i) l.emplace_back(s.xi, s.bandwidths[i]);
    const std::size_t d = s.model->driver_dim();
    const std::size_t nodes = s.sampler.grid().nodes();
    parallel_blocks(paths, s.threads, [&](std::size_t w, std::size_t begin, std::size_t end) {
        std::vector<double> buffer(nodes * d);
        for (std::size_t p = begin; p < end; ++p) {
            s.sampler.sample_into(s.seed, first + p, buffer);
            SamplePath path(s.sampler.grid(), d, buffer);
            for (std::size_t i = 0; i < s.schedule.size(); ++i) {
                const auto coarse = restrict_to_partition(path, s.grids[i]);
                const auto y = solve_state_at(*s.model, coarse, s.time, s.solver);
                local[w][i].add(y);
            }
        }
    });
    for (auto& l : local)
        for (std::size_t i = 0; i < s.schedule.size(); ++i) s.totals[i].merge(l[i]);
    s.done += paths;
}

DensityEstimate CoupledDensityBatch::estimate(std::size_t schedule_index) const {
    const auto& s = *impl_;
    auto est = s.totals.at(schedule_index).finish(s.time);
    est.provenance = {{"model", s.model->describe()},
                      {"hurst", s.hurst},
                      {"m", s.schedule[schedule_index]},
                      {"sample_m", s.sampler.grid().segments()},
                      {"bandwidth", s.bandwidths[schedule_index]},
                      {"time", s.time},
                      {"samples", est.samples},
                      {"seed", s.seed},
                      {"solver", s.solver.to_json()}};
    return est;
}

DensityEstimate estimate_density(const VectorFieldModel& model, const DensityConfig& config) {
    if (config.m == 0) throw ConfigError("m must be positive");
    if (!(config.delta > 0.0)) throw ConfigError("delta must be positive");
    if (config.samples < 2) throw ConfigError("need at least two samples");
    // non-owning alias; the batch does not outlive this call
    std::shared_ptr<const VectorFieldModel> alias(std::shared_ptr<const VectorFieldModel>{}, &model);
    const double rho = std::pow(static_cast<double>(config.m), -config.delta);
    CoupledDensityBatch batch(alias, config.hurst, config.time, {config.m}, config.m, {rho}, config.xi,
                              config.solver, config.seed, config.threads);
    batch.run(config.samples);
    auto est = batch.estimate(0);
    est.provenance["delta"] = config.delta;
    est.provenance["model"] = model.describe();
    return est;
}

double GaussianLaw::density(std::span<const double> xi) const {
    const auto e = static_cast<Eigen::Index>(mean.size());
    if (static_cast<Eigen::Index>(xi.size()) != e) throw ConfigError("xi dimension mismatch");
    Eigen::VectorXd x(e);
    for (Eigen::Index i = 0; i < e; ++i) x[i] = xi[static_cast<std::size_t>(i)] - mean[i];
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) throw NumericalError("law covariance is not positive definite");
    const Eigen::VectorXd z = llt.matrixL().solve(x);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < e; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return std::exp(-0.5 * z.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(e) * std::log(2.0 * std::numbers::pi));
}

GaussianLaw affine_law(const VectorFieldModel& model, double hurst, double t) {
    const AffineModel* aff = model.as_affine();
    if (!aff) throw ConfigError("unsupported-oracle: reference density needs the affine preset");
    if (hurst != 0.5) throw ConfigError("unsupported-oracle: reference density needs H = 1/2");
    if (!(t > 0.0)) throw ConfigError("reference density needs t > 0");
    const auto& A = aff->drift_matrix();
    const auto& c = aff->drift_offset();
    const Eigen::MatrixXd Q = aff->sigma() * aff->sigma().transpose();
    const Eigen::Index e = A.rows();

    // mean: exp of [[A, c], [0, 0]] t, top-right column (y_0 = 0)
    Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(e + 1, e + 1);
    mm.topLeftCorner(e, e) = A * t;
    mm.topRightCorner(e, 1) = c * t;
    const Eigen::MatrixXd em = mm.exp();

    // covariance, Van Loan: exp([[-A, Q], [0, A^T]] t) = [[., F12], [0, F22]], C = F22^T F12
    Eigen::MatrixXd vl = Eigen::MatrixXd::Zero(2 * e, 2 * e);
    vl.topLeftCorner(e, e) = -A * t;
    vl.topRightCorner(e, e) = Q * t;
    vl.bottomRightCorner(e, e) = A.transpose() * t;
    const Eigen::MatrixXd ev = vl.exp();
    const Eigen::MatrixXd F12 = ev.topRightCorner(e, e);
    const Eigen::MatrixXd F22 = ev.bottomRightCorner(e, e);
    Eigen::MatrixXd cov = F22.transpose() * F12;
    cov = 0.5 * (cov + cov.transpose()).eval();
    return GaussianLaw{em.topRightCorner(e, 1), cov};
}

double reference_density(const VectorFieldModel& model, double hurst, double t, std::span<const double> xi) {
    return affine_law(model, hurst, t).density(xi);
}

SupError sup_error(const DensityEstimate& estimate, std::span<const double> reference_values) {
    if (reference_values.size() != estimate.values.size()) throw ConfigError("reference size mismatch");
    SupError out;
    for (std::size_t i = 0; i < reference_values.size(); ++i) {
        const double diff = std::abs(estimate.values[i] - reference_values[i]);
        // NaN wins so a broken estimate cannot hide
        if (i == 0 || diff > out.value || std::isnan(diff)) {
            out.value = diff;
            out.index = i;
            if (std::isnan(diff)) break;
        }
    }
    out.location = estimate.xi.point(out.index);
    return out;
}

SupError sup_error(const DensityEstimate& estimate,
                   const std::function<double(std::span<const double>)>& reference) {
    std::vector<double> ref(estimate.values.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const auto p = estimate.xi.point(i);
        ref[i] = reference(p);
    }
    return sup_error(estimate, std::span<const double>(ref));
}

void write_density_csv(std::ostream& os, const DensityEstimate& estimate) {
    const std::size_t e = estimate.xi.dim();
    for (std::size_t a = 0; a < e; ++a) os << "xi_" << (a + 1) << ',';
    os << "p_hat,stderr\n";
    os.precision(17);
    for (std::size_t i = 0; i < estimate.values.size(); ++i) {
        for (double v : estimate.xi.point(i)) os << v << ',';
        os << estimate.values[i] << ',' << estimate.stderrs[i] << '\n';
    }
}

}  // namespace roughwz
