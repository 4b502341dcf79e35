#include "mfsim/harness.hpp"

#include "mfsim/errors.hpp"
#include "mfsim/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mfsim {

std::string_view to_string(ErrorMetric m) {
    switch (m) {
        case ErrorMetric::strong_rmse: return "strong_rmse";
        case ErrorMetric::strong_path: return "strong_path";
        case ErrorMetric::poc: return "poc";
    }
    return "unknown";
}

NewtonSummary NewtonSummary::of(const NewtonStats& s) {
    return {s.solves, s.median_iterations(), s.max_iterations, s.max_residual, s.fallbacks};
}

bool ErrorTable::any_diverged() const {
    return std::any_of(rows.begin(), rows.end(), [](const ErrorRow& r) { return r.diverged; });
}

RateFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw FitError("fit needs matching x and y");
    }
    if (x.size() < 3) {
        throw FitError("fit needs at least 3 usable rows, got " + std::to_string(x.size()));
    }
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw FitError("fit needs finite positive values");
        }
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw FitError("fit needs at least two distinct parameters");
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.rows_used = n;
    return fit;
}

namespace {

std::vector<std::size_t> usable_rows(const ErrorTable& table) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const ErrorRow& r = table.rows[i];
        if (!r.diverged && std::isfinite(r.error) && r.error > 0.0 && r.parameter > 0.0) {
            idx.push_back(i);
        }
    }
    return idx;
}

RateFit fit_indices(const ErrorTable& table, const std::vector<std::size_t>& idx) {
    std::vector<double> x, y;
    for (std::size_t i : idx) {
        x.push_back(table.rows[i].parameter);
        y.push_back(table.rows[i].error);
    }
    return fit_power_law(x, y);
}

// Index into `idx` of the usable row the guard drops, if any.
std::optional<std::size_t> guard_candidate(const ErrorTable& table, const std::vector<std::size_t>& idx) {
    if (table.metric == ErrorMetric::poc || idx.size() < 4) return std::nullopt;
    const std::size_t last = idx.size() - 1;
    const std::vector<std::size_t> rest(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(last));
    const RateFit others = fit_indices(table, rest);
    const ErrorRow& big = table.rows[idx[last]];
    const double predicted = std::exp(others.intercept + others.slope * std::log(big.parameter));
    if (big.error > 10.0 * predicted) return last;
    return std::nullopt;
}

}  // namespace

RateFit fit_rate(const ErrorTable& table) {
    std::vector<std::size_t> idx = usable_rows(table);
    if (idx.size() < 3) {
        throw FitError("fit needs at least 3 finite positive rows, got " + std::to_string(idx.size()));
    }
    std::optional<double> dropped;
    if (const auto g = guard_candidate(table, idx)) {
        dropped = table.rows[idx[*g]].parameter;
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(*g));
    }
    RateFit fit = fit_indices(table, idx);
    fit.guard_excluded = dropped;
    return fit;
}

void apply_fit(ErrorTable& table) {
    for (ErrorRow& r : table.rows) {
        r.excluded = r.diverged || !std::isfinite(r.error) || !(r.error > 0.0);
    }
    try {
        table.fit = fit_rate(table);
    } catch (const FitError&) {
        table.fit.reset();
        return;
    }
    if (table.fit->guard_excluded) {
        for (ErrorRow& r : table.rows) {
            if (r.parameter == *table.fit->guard_excluded) r.excluded = true;
        }
    }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t steps_for(double T, double h, std::string_view what) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw ConfigError(std::string(what) + " must be positive");
    }
    const double ratio = T / h;
    const double M = std::round(ratio);
    if (M < 1.0 || std::abs(ratio - M) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError(std::string(what) + " = " + std::to_string(h) + " does not divide T = " + std::to_string(T));
    }
    return static_cast<std::size_t>(M);
}

double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double e = a[k] - b[k];
        s += e * e;
    }
    return s;
}

void sort_rows(ErrorTable& t) {
    std::stable_sort(t.rows.begin(), t.rows.end(),
                     [](const ErrorRow& a, const ErrorRow& b) { return a.parameter < b.parameter; });
}

ErrorTable strong_error_once(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                             std::span<const double> h_list, double h_proxy, const SweepOptions& opt, bool path) {
    if (h_list.empty()) {
        throw ConfigError("h list is empty");
    }
    SchemeParams proxy = base;
    proxy.M = steps_for(base.T, h_proxy, "proxy step h_proxy");
    const double h_fine = opt.h_fine.value_or(proxy.h());
    const NoisePlan plan(base.seed, base.N, m.noise_dim, h_fine, steps_for(base.T, h_fine, "fine step h_fine"));
    const std::size_t proxy_factor = plan.factor_for(proxy.h());

    std::vector<SchemeParams> cells;
    std::vector<std::size_t> factors;
    for (double h : h_list) {
        SchemeParams p = base;
        p.M = steps_for(base.T, h, "step h");
        if (h < h_proxy * (1.0 - 1e-9)) {
            throw ConfigError("step h = " + std::to_string(h) + " is below the proxy step " + std::to_string(h_proxy));
        }
        factors.push_back(plan.factor_for(p.h()));
        cells.push_back(p);
    }
    std::size_t g = 0;
    for (std::size_t f : factors) {
        if (f % proxy_factor != 0) {
            throw ConfigError("step h = " + std::to_string(f * h_fine) + " is not a multiple of the proxy step");
        }
        g = std::gcd(g, f / proxy_factor);
    }

    ErrorTable table;
    table.metric = path ? ErrorMetric::strong_path : ErrorMetric::strong_rmse;
    const auto proxy_start = Clock::now();
    const RecordSpec proxy_record = path ? RecordSpec::thinned(g) : RecordSpec::terminal();
    const SimulationResult ref = simulate(m, proxy, x0, plan, proxy_record, opt.newton);
    table.proxy_wall_seconds = seconds_since(proxy_start);

    const std::size_t d = m.dim;
    const std::size_t n = base.N;
    table.rows.resize(cells.size());
    parallel_for(cells.size(), opt.threads, [&](std::size_t c) {
        const auto start = Clock::now();
        const SchemeParams& p = cells[c];
        ErrorRow& row = table.rows[c];
        row.parameter = p.h();
        row.n_samples = n;
        const SimulationResult run =
            simulate(m, p, x0, plan, path ? RecordSpec::full_path() : RecordSpec::terminal(), opt.newton);
        row.newton = NewtonSummary::of(run.newton);
        if (run.diverged || ref.diverged) {
            row.diverged = true;
            row.error = kInf;
        } else if (!path) {
            const auto& a = ref.terminal().positions;
            const auto& b = run.terminal().positions;
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += squared_distance(&a[i * d], &b[i * d], d);
            row.error = std::sqrt(sum / static_cast<double>(n));
        } else {
            const std::size_t stride = factors[c] / proxy_factor / g;
            std::vector<double> sup(n, 0.0);
            for (std::size_t s = 0; s < run.snapshots.size(); ++s) {
                const auto& b = run.snapshots[s].positions;
                const auto& a = ref.snapshots[run.snapshots[s].step * stride].positions;
                for (std::size_t i = 0; i < n; ++i) {
                    sup[i] = std::max(sup[i], squared_distance(&a[i * d], &b[i * d], d));
                }
            }
            row.error = std::sqrt(std::accumulate(sup.begin(), sup.end(), 0.0) / static_cast<double>(n));
        }
        row.wall_seconds = seconds_since(start);
    });
    sort_rows(table);
    return table;
}

ErrorTable poc_error_once(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                          std::span<const std::size_t> N_list, std::size_t N_proxy, const SweepOptions& opt) {
    if (N_list.empty()) {
        throw ConfigError("N list is empty");
    }
    if (base.M == 0) {
        throw ConfigError("number of steps M must be positive");
    }
    for (std::size_t n : N_list) {
        if (n == 0) throw ConfigError("particle counts must be positive");
        if (n > N_proxy) {
            throw ConfigError("N = " + std::to_string(n) + " exceeds the proxy system size " +
                              std::to_string(N_proxy));
        }
    }
    const double h_fine = opt.h_fine.value_or(base.h());
    const NoisePlan plan(base.seed, N_proxy, m.noise_dim, h_fine, steps_for(base.T, h_fine, "fine step h_fine"));
    ErrorTable table;
    table.metric = ErrorMetric::poc;

    SchemeParams proxy = base;
    proxy.N = N_proxy;
    const auto proxy_start = Clock::now();
    const SimulationResult ref = simulate(m, proxy, x0, plan, RecordSpec::terminal(), opt.newton);
    table.proxy_wall_seconds = seconds_since(proxy_start);

    const std::size_t d = m.dim;
    table.rows.resize(N_list.size());
    parallel_for(N_list.size(), opt.threads, [&](std::size_t c) {
        const auto start = Clock::now();
        SchemeParams p = base;
        p.N = N_list[c];
        ErrorRow& row = table.rows[c];
        row.parameter = static_cast<double>(p.N);
        row.n_samples = p.N;
        const SimulationResult run = simulate(m, p, x0, plan, RecordSpec::terminal(), opt.newton);
        row.newton = NewtonSummary::of(run.newton);
        if (run.diverged || ref.diverged) {
            row.diverged = true;
            row.error = kInf;
        } else {
            const auto& a = ref.terminal().positions;
            const auto& b = run.terminal().positions;
            double sum = 0.0;
            for (std::size_t i = 0; i < p.N; ++i) sum += squared_distance(&a[i * d], &b[i * d], d);
            row.error = std::sqrt(sum / static_cast<double>(p.N));
        }
        row.wall_seconds = seconds_since(start);
    });
    sort_rows(table);
    return table;
}

template <class Once>
ErrorTable replicate(const SchemeParams& base, const SweepOptions& opt, Once once) {
    if (opt.replicates == 0) {
        throw ConfigError("replicates must be at least 1");
    }
    std::vector<ErrorTable> tables;
    for (std::size_t r = 0; r < opt.replicates; ++r) {
        SchemeParams p = base;
        p.seed = base.seed + r;
        tables.push_back(once(p));
    }
    ErrorTable out = tables.size() == 1 ? std::move(tables.front()) : average_tables(tables);
    apply_fit(out);
    return out;
}

}  // namespace

ErrorTable strong_error(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                        std::span<const double> h_list, double h_proxy, const SweepOptions& opt, bool path) {
    return replicate(base, opt, [&](const SchemeParams& p) {
        return strong_error_once(m, p, x0, h_list, h_proxy, opt, path);
    });
}

ErrorTable path_strong_error(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                             std::span<const double> h_list, double h_proxy, const SweepOptions& opt) {
    return strong_error(m, base, x0, h_list, h_proxy, opt, true);
}

ErrorTable poc_error(const ModelSpec& m, const SchemeParams& base, const InitialDistribution& x0,
                     std::span<const std::size_t> N_list, std::size_t N_proxy, const SweepOptions& opt) {
    return replicate(base, opt, [&](const SchemeParams& p) {
        return poc_error_once(m, p, x0, N_list, N_proxy, opt);
    });
}

ErrorTable average_tables(std::span<const ErrorTable> tables) {
    if (tables.empty()) {
        throw ConfigError("no tables to average");
    }
    ErrorTable out = tables.front();
    out.fit.reset();
    const double count = static_cast<double>(tables.size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        ErrorRow& row = out.rows[i];
        row.n_samples = 0;
        row.error = 0.0;
        row.wall_seconds = 0.0;
        for (const ErrorTable& t : tables) {
            if (t.rows.size() != out.rows.size() || t.rows[i].parameter != row.parameter) {
                throw ConfigError("tables to average have different parameters");
            }
            row.error += t.rows[i].error;
            row.n_samples += t.rows[i].n_samples;
            row.wall_seconds += t.rows[i].wall_seconds;
            row.diverged = row.diverged || t.rows[i].diverged;
        }
        row.error = row.diverged ? kInf : row.error / count;
    }
    out.proxy_wall_seconds = 0.0;
    for (const ErrorTable& t : tables) out.proxy_wall_seconds += t.proxy_wall_seconds;
    return out;
}

std::vector<HistogramRow> histogram(std::span<const double> values, std::size_t bins, double t, std::size_t coord) {
    if (bins == 0) {
        throw ConfigError("histogram needs at least one bin");
    }
    if (values.empty()) {
        throw ConfigError("histogram of an empty cloud");
    }
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (!(hi > lo)) {
        lo = *mn - 0.5;
        hi = *mn + 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
        counts[std::min(b, bins - 1)]++;
    }
    std::vector<HistogramRow> rows(bins);
    const double n = static_cast<double>(values.size());
    for (std::size_t b = 0; b < bins; ++b) {
        rows[b].t = t;
        rows[b].coord = coord;
        rows[b].bin_lo = lo + width * static_cast<double>(b);
        rows[b].bin_hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
        rows[b].mass = static_cast<double>(counts[b]) / n;
    }
    return rows;
}

double histogram_mode(std::span<const HistogramRow> rows) {
    if (rows.empty()) {
        throw ConfigError("mode of an empty histogram");
    }
    const auto it = std::max_element(rows.begin(), rows.end(),
                                     [](const HistogramRow& a, const HistogramRow& b) { return a.mass < b.mass; });
    return 0.5 * (it->bin_lo + it->bin_hi);
}

std::size_t grid_step(double t, const SchemeParams& p) {
    const double ratio = t / p.h();
    const double n = std::round(ratio);
    if (!(t >= 0.0) || n > static_cast<double>(p.M) || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError("time " + std::to_string(t) + " is not on the grid of step " + std::to_string(p.h()) +
                          " over [0, " + std::to_string(p.T) + "]");
    }
    return static_cast<std::size_t>(n);
}

DensityExport export_density(const ModelSpec& m, const SchemeParams& p, const InitialDistribution& x0,
                             std::span<const double> times, std::size_t bins, const NewtonConfig& cfg) {
    if (bins == 0) {
        throw ConfigError("bins must be at least 1");
    }
    std::vector<std::size_t> steps;
    for (double t : times) steps.push_back(grid_step(t, p));

    const NoisePlan plan(p.seed, p.N, m.noise_dim, p.h(), p.M);
    std::vector<std::vector<double>> captured(steps.size());
    const ParticleState initial = sample_initial(x0, p.seed, p.N, m.dim);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (steps[k] == 0) captured[k] = initial.positions;
    }
    const auto observer = [&](const StepEvent& e) {
        for (std::size_t k = 0; k < steps.size(); ++k) {
            if (steps[k] == e.step + 1) captured[k] = e.after.positions;
        }
    };
    const SimulationResult run = simulate(m, p, initial, plan.feed(1, p.N), RecordSpec::terminal(), cfg, observer);

    DensityExport out;
    out.diverged = run.diverged;
    out.newton = NewtonSummary::of(run.newton);
    const std::size_t d = m.dim;
    std::vector<double> column(p.N);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (captured[k].empty()) continue;
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t i = 0; i < p.N; ++i) column[i] = captured[k][i * d + c];
            const auto rows = histogram(column, bins, p.time(steps[k]), c);
            out.rows.insert(out.rows.end(), rows.begin(), rows.end());
        }
    }
    return out;
}

PhaseExport export_phase_means(const ModelSpec& m, const SchemeParams& p, const ParticleState& initial,
                               const NoiseFeed& noise, const NewtonConfig& cfg) {
    if (m.dim != 2) {
        throw ConfigError("phase means need a two-dimensional model, got d = " + std::to_string(m.dim));
    }
    PhaseExport out;
    const auto push = [&](double t, const ParticleState& s) {
        std::vector<double> mean(2);
        s.cloud().mean(mean);
        out.points.push_back({t, mean[0], mean[1]});
    };
    push(0.0, initial);
    const auto observer = [&](const StepEvent& e) { push(p.time(e.step + 1), e.after); };
    const SimulationResult run = simulate(m, p, initial, noise, RecordSpec::terminal(), cfg, observer);
    out.diverged = run.diverged;
    out.newton = NewtonSummary::of(run.newton);
    return out;
}

PhaseExport export_phase_means(const ModelSpec& m, const SchemeParams& p, const InitialDistribution& x0,
                               const NewtonConfig& cfg) {
    if (m.dim != 2) {
        throw ConfigError("phase means need a two-dimensional model, got d = " + std::to_string(m.dim));
    }
    const NoisePlan plan(p.seed, p.N, m.noise_dim, p.h(), p.M);
    return export_phase_means(m, p, sample_initial(x0, p.seed, p.N, m.dim), plan.feed(1, p.N), cfg);
}

}  // namespace mfsim
