#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roughwz/density.hpp"
#include "roughwz/fbm.hpp"
#include "roughwz/ode.hpp"
#include "roughwz/vector_field.hpp"

namespace roughwz {

enum class StudyKind { pathwise, lift, density, nfunc_stats };

std::string to_string(StudyKind kind);
StudyKind study_kind_from_string(const std::string& s);

struct StudyConfig {
    StudyKind kind = StudyKind::pathwise;
    nlohmann::json model = {{"preset", "bounded"}};
    double hurst = 0.5;
    std::vector<std::size_t> schedule{8, 16, 32, 64, 128};
    std::size_t m_ref = 1024;
    std::size_t samples = 2000;
    double time = 1.0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out_dir;
    /// Studies integrate with fixed substeps by default: the scheme error is
    /// far below the statistical error being measured.
    SolverOptions solver{.initial_substeps = 2, .adaptive = false, .with_jacobian = false};

    // lift
    std::size_t driver_dim = 2;
    std::string lift_statistic = "levy-node-sup";  // or "pvar"
    double pvar_p = 0.0;                           // 0: 1/H + 0.5

    // density
    std::optional<double> delta;       // default 2H - 1/2
    std::string density_reference;     // "oracle" | "self"; empty: oracle when available
    std::size_t max_samples = 1u << 22;
    std::size_t xi_points = 0;         // 0: 201 for e = 1, 41 per axis for e = 2
    std::optional<std::pair<double, double>> xi_range;  // per axis, default mean +- 4 sd
    double resolve_fraction = 0.25;    // MC standard error target relative to the smallest bias

    // nfunc-stats
    double nfunc_p = 4.0;
    double nfunc_beta = 1.0;
    std::vector<double> eta{0.5};

    /// Rerun with 2 m_ref and report both fits.
    bool verify_proxy = false;

    static StudyConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    /// Throws ConfigError.
    void validate() const;
    double effective_delta() const;
};

struct MStatistic {
    std::size_t m = 0;
    double mean = 0.0;
    double median = 0.0;
    double q90 = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
    std::size_t zeros = 0;
};

struct RateFit {
    double slope = 0.0;  // error ~ m^{-slope}
    double intercept = 0.0;
    double slope_stderr = 0.0;
    std::size_t points = 0;
};

/// OLS on (log m, log error); non-positive errors are dropped. Throws
/// InconclusiveError with fewer than 3 usable points.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

MStatistic summarize(std::size_t m, std::vector<double> values);

struct ConvergenceReport {
    StudyKind kind = StudyKind::pathwise;
    std::vector<MStatistic> rows;
    std::optional<RateFit> fit;
    std::vector<std::size_t> excluded_m;  // zero error, not in the fit
    double expected_slope = 0.0;
    bool inconclusive = false;
    std::string note;
    nlohmann::json config;
    nlohmann::json extra;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

/// Per-path pathwise errors: for each m, max over fine nodes of |y(w(Q_m)) - y(w)|
/// with both drivers living on the grid of w.
std::vector<double> pathwise_errors(const VectorFieldModel& model, const SamplePath& w,
                                    std::span<const std::size_t> schedule, const SolverOptions& solver);

/// Per-path Levy-area discrepancy: max over nodes of w and pairs i < j of
/// |A(w(Q_m))_{0,t} - A(w)_{0,t}|.
std::vector<double> levy_area_errors(const SamplePath& w, std::span<const std::size_t> schedule);
/// Running Levy area of the piecewise-linear path at its nodes, nodes x d x d.
std::vector<double> running_levy_area(const SamplePath& w);

ConvergenceReport run_pathwise_study(const StudyConfig& config);
ConvergenceReport run_lift_study(const StudyConfig& config);
ConvergenceReport run_density_study(const StudyConfig& config);

struct NFuncSummary {
    std::vector<MStatistic> rows;  // statistics of N per m
    std::vector<double> eta;
    std::vector<std::vector<double>> exp_moments;  // [m][eta]
    std::vector<std::vector<double>> exp_moment_stderr;
    std::vector<double> stability_ratio;  // per eta: max / min over m
    nlohmann::json config;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

NFuncSummary run_nfunc_stats(const StudyConfig& config);
/// N per path on one partition, coupled through restriction from a common fine sample.
std::vector<std::size_t> nfunc_samples(const SamplePath& w, std::span<const std::size_t> schedule, double p,
                                       double beta);

/// CSV columns: m, stat_mean, stat_median, stat_q90, stderr.
void write_study_csv(std::ostream& os, std::span<const MStatistic> rows);

}  // namespace roughwz
