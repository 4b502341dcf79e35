#pragma once

#include "mfsim/implicit_solver.hpp"
#include "mfsim/model.hpp"
#include "mfsim/schemes.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mfsim {

enum class ErrorMetric { strong_rmse, strong_path, poc };

[[nodiscard]] std::string_view to_string(ErrorMetric m);

struct NewtonSummary {
    std::size_t solves = 0;
    double median_iterations = 0.0;
    int max_iterations = 0;
    double max_residual = 0.0;
    std::size_t fallbacks = 0;

    [[nodiscard]] static NewtonSummary of(const NewtonStats& s);
};

struct ErrorRow {
    double parameter = 0.0;  ///< h, or N for propagation-of-chaos tables
    double error = 0.0;      ///< +inf for diverged cells
    std::size_t n_samples = 0;
    bool diverged = false;
    bool excluded = false;  ///< left out of the rate fit
    double wall_seconds = 0.0;
    NewtonSummary newton;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t rows_used = 0;
    /// Parameter dropped by the pre-asymptotic guard, if any.
    std::optional<double> guard_excluded;
};

struct ErrorTable {
    ErrorMetric metric = ErrorMetric::strong_rmse;
    std::vector<ErrorRow> rows;  ///< sorted by parameter
    double proxy_wall_seconds = 0.0;
    std::optional<RateFit> fit;

    [[nodiscard]] bool any_diverged() const;
};

/// Ordinary least squares of log(y) on log(x).
[[nodiscard]] RateFit fit_power_law(std::span<const double> x, std::span<const double> y);

/// Fits over rows with finite positive error. For step-size tables with at
/// least four usable rows, the largest h is dropped when its error exceeds 10x
/// the prediction of the others. Throws FitError with fewer than 3 usable rows.
[[nodiscard]] RateFit fit_rate(const ErrorTable& table);

/// fit_rate, storing the fit and marking excluded rows. Leaves `fit` empty
/// when no fit is possible.
void apply_fit(ErrorTable& table);

struct SweepOptions {
    std::size_t threads = 1;
    NewtonConfig newton;
    /// Number of seeds (seed, seed+1, ...) whose tables are averaged.
    std::size_t replicates = 1;
    /// Finest step of the shared noise plan; defaults to the proxy step
    /// (or the run's own step for propagation-of-chaos tables).
    std::optional<double> h_fine;
};

/// Terminal (or path, with `path` set) strong error of the scheme at each h
/// against the same scheme at h_proxy, all runs driven by one noise plan.
/// `base` supplies T, N, scheme, taming exponent and seed.
[[nodiscard]] ErrorTable strong_error(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                                      std::span<const double> h_list, double h_proxy, const SweepOptions& opt = {},
                                      bool path = false);

[[nodiscard]] ErrorTable path_strong_error(const ModelSpec& m, const SchemeParams& base,
                                           const InitialDistribution& x0, std::span<const double> h_list,
                                           double h_proxy, const SweepOptions& opt = {});

/// Propagation-of-chaos error: particle j of an N_l system against particle j
/// of the N_proxy system at time T. `base` supplies T, M, scheme and seed.
[[nodiscard]] ErrorTable poc_error(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                                   std::span<const std::size_t> N_list, std::size_t N_proxy,
                                   const SweepOptions& opt = {});

/// Row-wise mean of tables with identical parameters; a row diverged in any
/// table is diverged in the result.
[[nodiscard]] ErrorTable average_tables(std::span<const ErrorTable> tables);

struct HistogramRow {
    double t = 0.0;
    std::size_t coord = 0;
    double bin_lo = 0.0;
    double bin_hi = 0.0;
    double mass = 0.0;
};

/// Equal-width histogram of values over [min, max] (or [v - 0.5, v + 0.5]
/// when all values coincide), masses normalized to sum to one.
[[nodiscard]] std::vector<HistogramRow> histogram(std::span<const double> values, std::size_t bins, double t = 0.0,
                                                  std::size_t coord = 0);

/// Centre of the heaviest bin.
[[nodiscard]] double histogram_mode(std::span<const HistogramRow> rows);

struct DensityExport {
    std::vector<HistogramRow> rows;
    bool diverged = false;
    NewtonSummary newton;
};

/// Map from a time on the grid t = n h to n; throws ConfigError otherwise.
[[nodiscard]] std::size_t grid_step(double t, const SchemeParams& p);

[[nodiscard]] DensityExport export_density(const ModelSpec& m, const SchemeParams& p, const InitialDistribution& x0,
                                           std::span<const double> times, std::size_t bins,
                                           const NewtonConfig& cfg = {});

struct PhasePoint {
    double t = 0.0;
    double mean_x1 = 0.0;
    double mean_x2 = 0.0;
};

struct PhaseExport {
    std::vector<PhasePoint> points;
    bool diverged = false;
    NewtonSummary newton;
};

/// Cross-particle mean at every grid time; requires d = 2.
[[nodiscard]] PhaseExport export_phase_means(const ModelSpec& m, const SchemeParams& p,
                                             const InitialDistribution& x0, const NewtonConfig& cfg = {});

/// Same from an explicit initial state and noise feed.
[[nodiscard]] PhaseExport export_phase_means(const ModelSpec& m, const SchemeParams& p, const ParticleState& initial,
                                             const NoiseFeed& noise, const NewtonConfig& cfg = {});

}  // namespace mfsim
