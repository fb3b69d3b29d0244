#include "roughwz/fbm.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <ostream>
#include <string>

#include <fftw3.h>

#include "roughwz/errors.hpp"
#include "roughwz/parallel.hpp"
#include "roughwz/rng.hpp"

namespace roughwz {

namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n)
        : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!data) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* data;
};

}  // namespace

HurstParameter::HurstParameter(double value) : value_(value) {
    if (!(value > 0.0 && value < 1.0))
        throw ConfigError("Hurst parameter must lie in (0,1), got " + std::to_string(value));
}

void HurstParameter::require_lift_range() const {
    if (!(value_ > 0.25 && value_ <= 0.5))
        throw ConfigError("this operation requires 1/4 < H <= 1/2, got " + std::to_string(value_));
}

double fbm_covariance(double hurst, double s, double t) noexcept {
    const double a = 2.0 * hurst;
    return 0.5 * (std::pow(t, a) + std::pow(s, a) - std::pow(std::abs(t - s), a));
}

double IncrementGram::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

bool IncrementGram::is_psd() const {
    return min_eigenvalue() >= -1e-10 * matrix.trace();
}

IncrementGram increment_gram(HurstParameter hurst, const TimeGrid& grid) {
    const std::size_t n = grid.segments();
    const double h = hurst.value();
    Eigen::MatrixXd g(n, n);
    auto r = [&](std::size_t i, std::size_t k) { return fbm_covariance(h, grid[i], grid[k]); };
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j; k < n; ++k) {
            double v;
            if (j == k) {
                v = std::pow(grid.step(j), 2.0 * h);
            } else {
                v = r(j + 1, k + 1) - r(j + 1, k) - r(j, k + 1) + r(j, k);
            }
            g(j, k) = v;
            g(k, j) = v;
        }
    }
    return IncrementGram{grid, std::move(g)};
}

struct FbmSampler::Impl {
    // Circulant route: sqrt(lambda_k / 2N) for the 2N-point embedding.
    std::vector<double> scale;
    fftw_plan plan = nullptr;
    std::size_t fft_size = 0;
    // Cholesky route: lower factor of the node covariance (nodes 1..N).
    Eigen::MatrixXd factor;

    ~Impl() {
        if (plan) {
            std::lock_guard lock(fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
    }
};

namespace {

bool try_circulant(double h, std::size_t n, std::vector<double>& scale, fftw_plan& plan) {
    const std::size_t size = 2 * n;
    const double step = 1.0 / static_cast<double>(n);
    const double a = 2.0 * h;
    auto gamma = [&](double k) {
        return 0.5 * std::pow(step, a) *
               (std::pow(std::abs(k + 1.0), a) - 2.0 * std::pow(std::abs(k), a) + std::pow(std::abs(k - 1.0), a));
    };
    FftwBuffer in(size), out(size);
    for (std::size_t k = 0; k < size; ++k) {
        const std::size_t lag = k <= n ? k : size - k;
        in.data[k][0] = gamma(static_cast<double>(lag));
        in.data[k][1] = 0.0;
    }
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_plan eig_plan = fftw_plan_dft_1d(static_cast<int>(size), in.data, out.data, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(eig_plan);
        fftw_destroy_plan(eig_plan);
    }
    double peak = 0.0;
    for (std::size_t k = 0; k < size; ++k) peak = std::max(peak, std::abs(out.data[k][0]));
    scale.assign(size, 0.0);
    for (std::size_t k = 0; k < size; ++k) {
        double lambda = out.data[k][0];
        if (lambda < 0.0) {
            if (lambda < -1e-12 * peak) return false;
            lambda = 0.0;
        }
        scale[k] = std::sqrt(lambda / static_cast<double>(size));
    }
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(size), in.data, out.data, FFTW_FORWARD, FFTW_ESTIMATE);
    return plan != nullptr;
}

Eigen::MatrixXd node_covariance_factor(double h, const TimeGrid& grid) {
    const std::size_t n = grid.segments();
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) cov(i, k) = fbm_covariance(h, grid[i + 1], grid[k + 1]);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov.diagonal().array() += 1e-12 * cov.trace();
        llt.compute(cov);
        if (llt.info() != Eigen::Success)
            throw NumericalError("fBM node covariance is not positive semidefinite after jitter");
    }
    return llt.matrixL();
}

}  // namespace

FbmSampler::FbmSampler(HurstParameter hurst, TimeGrid grid, std::size_t dim)
    : hurst_(hurst.value()), grid_(std::move(grid)), dim_(dim) {
    if (dim_ == 0) throw ConfigError("fBM dimension must be positive");
    auto impl = std::make_shared<Impl>();
    bool circulant = false;
    if (grid_.is_uniform()) {
        circulant = try_circulant(hurst_, grid_.segments(), impl->scale, impl->plan);
        if (circulant) impl->fft_size = 2 * grid_.segments();
    }
    if (!circulant) {
        impl->scale.clear();
        impl->factor = node_covariance_factor(hurst_, grid_);
    }
    impl_ = std::move(impl);
}

FbmSampler::~FbmSampler() = default;
FbmSampler::FbmSampler(const FbmSampler&) = default;
FbmSampler& FbmSampler::operator=(const FbmSampler&) = default;

bool FbmSampler::uses_circulant() const noexcept { return impl_->plan != nullptr; }

void FbmSampler::sample_into(std::uint64_t seed, std::uint64_t index, std::span<double> out) const {
    const std::size_t n = grid_.segments();
    if (out.size() != (n + 1) * dim_) throw ConfigError("fBM output buffer has the wrong size");
    NormalStream normal(seed, index);
    for (std::size_t c = 0; c < dim_; ++c) out[c] = 0.0;

    if (uses_circulant()) {
        const std::size_t size = impl_->fft_size;
        FftwBuffer in(size), res(size);
        for (std::size_t c = 0; c < dim_; c += 2) {
            for (std::size_t k = 0; k < size; ++k) {
                const double s = impl_->scale[k];
                in.data[k][0] = s * normal();
                in.data[k][1] = s * normal();
            }
            fftw_execute_dft(impl_->plan, in.data, res.data);
            double acc_re = 0.0, acc_im = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc_re += res.data[j][0];
                out[(j + 1) * dim_ + c] = acc_re;
                if (c + 1 < dim_) {
                    acc_im += res.data[j][1];
                    out[(j + 1) * dim_ + c + 1] = acc_im;
                }
            }
        }
        return;
    }

    Eigen::VectorXd z(n);
    for (std::size_t c = 0; c < dim_; ++c) {
        for (std::size_t j = 0; j < n; ++j) z[static_cast<Eigen::Index>(j)] = normal();
        const Eigen::VectorXd x = impl_->factor.triangularView<Eigen::Lower>() * z;
        for (std::size_t j = 0; j < n; ++j) out[(j + 1) * dim_ + c] = x[static_cast<Eigen::Index>(j)];
    }
}

SamplePath FbmSampler::sample(std::uint64_t seed, std::uint64_t index) const {
    std::vector<double> values(grid_.nodes() * dim_);
    sample_into(seed, index, values);
    return SamplePath(grid_, dim_, std::move(values));
}

std::vector<SamplePath> sample_fbm(HurstParameter hurst, const TimeGrid& grid, std::size_t dim,
                                   std::size_t count, std::uint64_t seed, unsigned threads) {
    if (count == 0) throw ConfigError("sample count must be positive");
    FbmSampler sampler(hurst, grid, dim);
    std::vector<SamplePath> paths(count, SamplePath(grid, dim));
    parallel_blocks(count, resolve_threads(threads), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) paths[i] = sampler.sample(seed, i);
    });
    return paths;
}

SamplePath restrict_to_partition(const SamplePath& path, const TimeGrid& coarse) {
    const auto idx = embed_nodes(coarse, path.grid());
    const std::size_t d = path.dim();
    std::vector<double> values(coarse.nodes() * d);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) values[i * d + c] = path(idx[i], c);
    return SamplePath(coarse, d, std::move(values));
}

void write_paths_csv(std::ostream& os, std::span<const SamplePath> paths) {
    if (paths.empty()) return;
    os << "path_id,t";
    for (std::size_t c = 0; c < paths.front().dim(); ++c) os << ",component_" << (c + 1);
    os << '\n';
    os.precision(17);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        for (std::size_t i = 0; i < path.grid().nodes(); ++i) {
            os << p << ',' << path.grid()[i];
            for (double v : path.at(i)) os << ',' << v;
            os << '\n';
        }
    }
}

void write_gram_csv(std::ostream& os, const IncrementGram& gram) {
    os.precision(17);
    const auto n = gram.matrix.rows();
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) os << (k ? "," : "") << gram.matrix(j, k);
        os << '\n';
    }
}

}  // namespace roughwz
