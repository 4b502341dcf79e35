#include "mfsim/schemes.hpp"

#include "mfsim/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mfsim {

std::string_view to_string(SchemeKind s) {
    switch (s) {
        case SchemeKind::ssm: return "ssm";
        case SchemeKind::taming: return "taming";
        case SchemeKind::euler: return "euler";
    }
    return "unknown";
}

SchemeKind parse_scheme(std::string_view s) {
    if (s == "ssm") return SchemeKind::ssm;
    if (s == "taming") return SchemeKind::taming;
    if (s == "euler") return SchemeKind::euler;
    throw ConfigError("unknown scheme '" + std::string(s) + "' (expected ssm, taming or euler)");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

double parse_number(std::string_view s, std::string_view context) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("cannot parse number '" + std::string(s) + "' in " + std::string(context));
    }
    return v;
}

std::string format_number(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// out = base + drift * h + sigma * dW, sigma d x l row-major.
void explicit_update(std::span<const double> base, std::span<const double> drift, std::span<const double> sigma,
                     std::span<const double> dW, double h, std::span<double> out) {
    const std::size_t d = base.size();
    const std::size_t l = dW.size();
    for (std::size_t k = 0; k < d; ++k) {
        double noise = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
            noise += sigma[k * l + c] * dW[c];
        }
        out[k] = base[k] + drift[k] * h + noise;
    }
}

void check_update(std::span<const double> x, std::size_t i) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw DivergenceError("non-finite state at particle " + std::to_string(i), i);
        }
    }
}

void check_noise_shape(std::span<const double> dW, std::size_t n, const ModelSpec& m) {
    if (dW.size() != n * m.noise_dim) {
        throw ConfigError("noise increments have the wrong shape for N x l");
    }
}

}  // namespace

InitialDistribution InitialDistribution::parse(std::string_view spec) {
    constexpr std::string_view prefix = "normal:";
    spec = trim(spec);
    if (spec.substr(0, prefix.size()) != prefix) {
        throw ConfigError("initial distribution '" + std::string(spec) + "' must start with 'normal:'");
    }
    spec.remove_prefix(prefix.size());
    InitialDistribution dist;
    while (!spec.empty()) {
        const auto semi = spec.find(';');
        const std::string_view part = spec.substr(0, semi);
        const auto comma = part.find(',');
        if (comma == std::string_view::npos) {
            throw ConfigError("initial distribution component '" + std::string(part) + "' must be 'mean,var'");
        }
        const double mean = parse_number(part.substr(0, comma), "x0 mean");
        const double var = parse_number(part.substr(comma + 1), "x0 variance");
        if (!(var >= 0.0)) {
            throw ConfigError("initial distribution variance must be >= 0");
        }
        dist.mean.push_back(mean);
        dist.var.push_back(var);
        if (semi == std::string_view::npos) break;
        spec.remove_prefix(semi + 1);
    }
    if (dist.mean.empty()) {
        throw ConfigError("initial distribution has no components");
    }
    return dist;
}

std::string InitialDistribution::to_string() const {
    std::string s = "normal:";
    for (std::size_t k = 0; k < mean.size(); ++k) {
        if (k > 0) s += ';';
        s += format_number(mean[k]) + "," + format_number(var[k]);
    }
    return s;
}

InitialDistribution InitialDistribution::broadcast(std::size_t dim) const {
    if (mean.size() == dim) return *this;
    if (mean.size() == 1) {
        return {std::vector<double>(dim, mean[0]), std::vector<double>(dim, var[0])};
    }
    throw ConfigError("initial distribution has " + std::to_string(mean.size()) +
                      " components but the model dimension is " + std::to_string(dim));
}

ParticleState sample_initial(const InitialDistribution& dist, std::uint64_t seed, std::size_t n, std::size_t dim) {
    const InitialDistribution full = dist.broadcast(dim);
    ParticleState s;
    s.dim = dim;
    s.positions.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            s.positions[i * dim + k] = full.mean[k] + std::sqrt(full.var[k]) * initial_normal(seed, i, k);
        }
    }
    return s;
}

StepResult ssm_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                    const SchemeParams& p, const NewtonConfig& cfg) {
    const std::size_t n = state.n_particles();
    const std::size_t d = m.dim;
    const std::size_t l = m.noise_dim;
    check_noise_shape(dW, n, m);
    const double h = p.h();

    ImplicitSolution sol = solve_implicit(state.cloud(), h, m, cfg);
    StepResult out;
    out.report = sol.report;
    out.y_star = std::move(sol.y);
    out.state.dim = d;
    out.state.t = state.t + h;
    out.state.positions.resize(n * d);

    const CloudView ycloud(out.y_star, d);
    std::vector<double> b(d), sigma(d * l);
    for (std::size_t i = 0; i < n; ++i) {
        const auto yi = ycloud.row(i);
        m.b(state.t, yi, ycloud, b);
        m.sigma(state.t, yi, ycloud, sigma);
        auto xi = std::span<double>(out.state.positions).subspan(i * d, d);
        explicit_update(yi, b, sigma, dW.subspan(i * l, l), h, xi);
        check_update(xi, i);
    }
    return out;
}

void tame(std::span<double> v, double M_pow_minus_alpha) {
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    const double scale = 1.0 + M_pow_minus_alpha * std::sqrt(norm2);
    for (double& x : v) x /= scale;
}

ParticleState taming_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                          const SchemeParams& p) {
    const std::size_t n = state.n_particles();
    const std::size_t d = m.dim;
    const std::size_t l = m.noise_dim;
    check_noise_shape(dW, n, m);
    const double h = p.h();
    const double damp = std::pow(static_cast<double>(p.M), -p.alpha_for(m));
    const CloudView cloud = state.cloud();

    ParticleState out;
    out.dim = d;
    out.t = state.t + h;
    out.positions.resize(n * d);
    std::vector<double> conv(d), u(d), b(d), drift(d), sigma(d * l);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = cloud.row(i);
        convolution_drift(i, cloud, m, conv);
        m.u(xi, cloud, u);
        m.b(state.t, xi, cloud, b);
        m.sigma(state.t, xi, cloud, sigma);
        tame(conv, damp);
        tame(u, damp);
        for (std::size_t k = 0; k < d; ++k) {
            drift[k] = conv[k] + u[k] + b[k];
        }
        auto next = std::span<double>(out.positions).subspan(i * d, d);
        explicit_update(xi, drift, sigma, dW.subspan(i * l, l), h, next);
        check_update(next, i);
    }
    return out;
}

ParticleState euler_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                         const SchemeParams& p) {
    const std::size_t n = state.n_particles();
    const std::size_t d = m.dim;
    const std::size_t l = m.noise_dim;
    check_noise_shape(dW, n, m);
    const double h = p.h();
    const CloudView cloud = state.cloud();

    ParticleState out;
    out.dim = d;
    out.t = state.t + h;
    out.positions.resize(n * d);
    std::vector<double> v(d), b(d), sigma(d * l);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = cloud.row(i);
        drift_v(i, cloud, m, v);
        m.b(state.t, xi, cloud, b);
        m.sigma(state.t, xi, cloud, sigma);
        for (std::size_t k = 0; k < d; ++k) {
            v[k] = v[k] + b[k];
        }
        auto next = std::span<double>(out.positions).subspan(i * d, d);
        explicit_update(xi, v, sigma, dW.subspan(i * l, l), h, next);
        check_update(next, i);
    }
    return out;
}

RecordSpec RecordSpec::parse(std::string_view s) {
    if (s == "terminal") return terminal();
    if (s == "path" || s == "full_path") return full_path();
    constexpr std::string_view prefix = "thin=";
    if (s.substr(0, prefix.size()) == prefix) {
        const double k = parse_number(s.substr(prefix.size()), "record");
        if (!(k >= 1.0) || k != std::floor(k)) {
            throw ConfigError("record thinning factor must be a positive integer");
        }
        return thinned(static_cast<std::size_t>(k));
    }
    throw ConfigError("unknown record mode '" + std::string(s) + "' (expected terminal, path or thin=k)");
}

std::string RecordSpec::to_string() const {
    switch (kind) {
        case Kind::terminal: return "terminal";
        case Kind::full_path: return "path";
        case Kind::thinned: return "thin=" + std::to_string(every);
    }
    return "terminal";
}

bool RecordSpec::keeps(std::size_t step, std::size_t M) const noexcept {
    if (step == M) return true;
    switch (kind) {
        case Kind::terminal: return false;
        case Kind::full_path: return true;
        case Kind::thinned: return step % every == 0;
    }
    return false;
}

void NewtonStats::add(const NewtonReport& r) {
    ++solves;
    iterations.push_back(r.iterations);
    max_iterations = std::max(max_iterations, r.iterations);
    max_residual = std::max(max_residual, r.final_residual_inf_norm);
    if (r.method != SolveMethod::newton) ++fallbacks;
}

double NewtonStats::median_iterations() const {
    if (iterations.empty()) return 0.0;
    std::vector<int> sorted = iterations;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    if (sorted.size() % 2 == 1) return sorted[mid];
    return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

SimulationResult simulate(const ModelSpec& m, const SchemeParams& p, const ParticleState& initial,
                          const NoiseFeed& noise, const RecordSpec& record, const NewtonConfig& cfg,
                          const StepObserver& observer) {
    if (initial.dim != m.dim) {
        throw ConfigError("initial state dimension does not match the model");
    }
    if (!(p.T > 0.0)) {
        throw ConfigError("horizon T must be positive");
    }
    const std::size_t n = initial.n_particles();
    SimulationResult result;
    result.dim = m.dim;

    ParticleState current = initial;
    current.t = 0.0;
    if (record.keeps(0, p.M)) {
        result.snapshots.push_back({0, 0.0, current.positions});
    }
    std::vector<double> dW(n * m.noise_dim);
    for (std::size_t step = 0; step < p.M; ++step) {
        noise(step, dW);
        ParticleState next;
        try {
            if (p.scheme == SchemeKind::ssm) {
                StepResult r = ssm_step(current, dW, m, p, cfg);
                result.newton.add(r.report);
                next = std::move(r.state);
                next.t = p.time(step + 1);
                if (observer) observer({step, current, next, r.y_star, &r.report});
            } else {
                next = p.scheme == SchemeKind::taming ? taming_step(current, dW, m, p) : euler_step(current, dW, m, p);
                next.t = p.time(step + 1);
                if (observer) observer({step, current, next, {}, nullptr});
            }
        } catch (const DivergenceError&) {
            result.diverged = true;
            result.diverged_step = step;
            if (result.snapshots.empty() || result.snapshots.back().step != step) {
                result.snapshots.push_back({step, current.t, current.positions});
            }
            return result;
        } catch (const SolverError& e) {
            throw SolverError("step " + std::to_string(step) + ": " + e.what(), e.report());
        }
        current = std::move(next);
        if (record.keeps(step + 1, p.M)) {
            result.snapshots.push_back({step + 1, current.t, current.positions});
        }
    }
    return result;
}

SimulationResult simulate(const ModelSpec& m, const SchemeParams& p, const InitialDistribution& x0,
                          const NoisePlan& plan, const RecordSpec& record, const NewtonConfig& cfg,
                          const StepObserver& observer) {
    if (plan.noise_dim() != m.noise_dim) {
        throw ConfigError("noise plan dimension does not match the model noise dimension");
    }
    const std::size_t factor = plan.factor_for(p.h());
    if (p.M * factor > plan.fine_steps()) {
        throw ConfigError("noise plan covers " + std::to_string(plan.fine_steps()) + " fine steps, " +
                          std::to_string(p.M * factor) + " needed");
    }
    const ParticleState initial = sample_initial(x0, p.seed, p.N, m.dim);
    return simulate(m, p, initial, plan.feed(factor, p.N), record, cfg, observer);
}

}  // namespace mfsim
