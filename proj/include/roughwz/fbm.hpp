#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "roughwz/grid.hpp"

namespace roughwz {

class HurstParameter {
public:
    /// Accepts 0 < value < 1.
    explicit HurstParameter(double value);

    double value() const noexcept { return value_; }
    /// Lift-consuming code works in 1/4 < H <= 1/2 only.
    void require_lift_range() const;

private:
    double value_;
};

/// Covariance of scalar fBM: (t^{2H} + s^{2H} - |t - s|^{2H}) / 2.
double fbm_covariance(double hurst, double s, double t) noexcept;

/// Cov(dw_j, dw_k) for one scalar component over the segments of a grid.
struct IncrementGram {
    TimeGrid grid;
    Eigen::MatrixXd matrix;

    double min_eigenvalue() const;
    /// Eigenvalue floor >= -1e-10 * trace.
    bool is_psd() const;
};

IncrementGram increment_gram(HurstParameter hurst, const TimeGrid& grid);

/// Exact sampler for d-dimensional fBM on a fixed grid.
///
/// Uniform grids use circulant embedding of the fractional Gaussian noise
/// autocovariance (two independent components per complex FFT); other grids,
/// or an embedding with negative eigenvalues, use a Cholesky factor of the
/// node covariance. Every path draws from its own stream derived from
/// (seed, index), so a path does not depend on the batch it is drawn in.
class FbmSampler {
public:
    FbmSampler(HurstParameter hurst, TimeGrid grid, std::size_t dim);
    ~FbmSampler();
    FbmSampler(const FbmSampler&);
    FbmSampler& operator=(const FbmSampler&);

    SamplePath sample(std::uint64_t seed, std::uint64_t index) const;
    /// Writes nodes * dim values (row-major by node) into out.
    void sample_into(std::uint64_t seed, std::uint64_t index, std::span<double> out) const;

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    double hurst() const noexcept { return hurst_; }
    bool uses_circulant() const noexcept;

private:
    struct Impl;
    double hurst_;
    TimeGrid grid_;
    std::size_t dim_;
    std::shared_ptr<const Impl> impl_;
};

std::vector<SamplePath> sample_fbm(HurstParameter hurst, const TimeGrid& grid, std::size_t dim,
                                   std::size_t count, std::uint64_t seed, unsigned threads = 1);

/// Subsamples a path at the nodes of a coarser grid: w(P) coupled to the same w.
SamplePath restrict_to_partition(const SamplePath& path, const TimeGrid& coarse);

/// CSV columns: path_id, t, component_1..component_d.
void write_paths_csv(std::ostream& os, std::span<const SamplePath> paths);
void write_gram_csv(std::ostream& os, const IncrementGram& gram);

}  // namespace roughwz
