#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "roughwz/ode.hpp"
#include "roughwz/parallel.hpp"
#include "roughwz/vector_field.hpp"

namespace roughwz {

/// (2 pi rho^2)^{-e/2} exp(-|x|^2 / 2 rho^2); values below exp(-40) times the
/// peak are flushed to zero.
double gaussian_kernel(std::span<const double> x, double rho);

/// Tensor-product evaluation grid; point index is row-major over the axes.
struct XiGrid {
    std::vector<std::vector<double>> axes;

    static XiGrid uniform(double lo, double hi, std::size_t count);
    /// count points per axis on [center - half_width, center + half_width]^e.
    static XiGrid box(std::span<const double> center, std::span<const double> half_width, std::size_t count);
    static XiGrid single(std::span<const double> point);

    std::size_t dim() const noexcept { return axes.size(); }
    std::size_t size() const noexcept;
    std::vector<double> point(std::size_t index) const;
};

struct DensityEstimate {
    double time = 1.0;
    double bandwidth = 1.0;
    XiGrid xi;
    std::vector<double> values;
    std::vector<double> stderrs;
    std::size_t samples = 0;
    nlohmann::json provenance;

    /// Trapezoidal integral over the grid (e <= 2).
    double trapezoid_mass() const;
};

/// Running kernel sums for one bandwidth on one grid.
class KernelAccumulator {
public:
    KernelAccumulator(const XiGrid& xi, double rho);

    void add(std::span<const double> y);
    void merge(const KernelAccumulator& other);
    std::size_t count() const noexcept { return count_; }
    DensityEstimate finish(double time) const;

private:
    std::shared_ptr<const XiGrid> xi_;
    double rho_, norm_, cutoff_;
    std::size_t count_ = 0;
    std::vector<CompensatedSum> sum_, sum_sq_;
    std::vector<std::size_t> lo_, hi_, idx_;
    std::vector<double> diff_;
};

struct DensityConfig {
    double hurst = 0.5;
    double time = 1.0;
    std::size_t m = 64;
    double delta = 0.5;
    std::size_t samples = 10000;
    XiGrid xi;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    SolverOptions solver{.with_jacobian = false};
};

/// Monte Carlo estimate of E[phi_{m^-delta}(y(m)_t - xi)] with y(m) driven by
/// the piecewise-linear interpolation of fBM on the uniform m-partition.
DensityEstimate estimate_density(const VectorFieldModel& model, const DensityConfig& config);

/// Kernel sums for a whole m-schedule from drivers sampled once on a fine
/// uniform grid and restricted to each partition (coupled across m). Paths
/// can be added in rounds; results depend only on the total path count.
class CoupledDensityBatch {
public:
    CoupledDensityBatch(std::shared_ptr<const VectorFieldModel> model, double hurst, double time,
                        std::vector<std::size_t> schedule, std::size_t sample_m, std::vector<double> bandwidths,
                        XiGrid xi, SolverOptions solver, std::uint64_t seed, unsigned threads);
    ~CoupledDensityBatch();

    void run(std::size_t paths);
    std::size_t paths() const noexcept;
    DensityEstimate estimate(std::size_t schedule_index) const;
    const std::vector<std::size_t>& schedule() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Exact law of y_t at H = 1/2 for the affine family (constant sigma, affine drift).
struct GaussianLaw {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double density(std::span<const double> xi) const;
};

GaussianLaw affine_law(const VectorFieldModel& model, double hurst, double t);
double reference_density(const VectorFieldModel& model, double hurst, double t, std::span<const double> xi);

struct SupError {
    double value = 0.0;
    std::size_t index = 0;
    std::vector<double> location;
};

SupError sup_error(const DensityEstimate& estimate, const std::function<double(std::span<const double>)>& reference);
SupError sup_error(const DensityEstimate& estimate, std::span<const double> reference_values);

/// CSV columns: xi_1..xi_e, p_hat, stderr.
void write_density_csv(std::ostream& os, const DensityEstimate& estimate);

}  // namespace roughwz
