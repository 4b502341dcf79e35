#pragma once

#include "mfsim/implicit_solver.hpp"
#include "mfsim/interaction.hpp"
#include "mfsim/model.hpp"
#include "mfsim/noise.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfsim {

enum class SchemeKind { ssm, taming, euler };

[[nodiscard]] std::string_view to_string(SchemeKind s);
[[nodiscard]] SchemeKind parse_scheme(std::string_view s);

struct SchemeParams {
    double T = 1.0;
    std::size_t M = 100;
    std::size_t N = 1;
    SchemeKind scheme = SchemeKind::ssm;
    /// Taming exponent; unset means 1 for constant diffusion, 1/2 otherwise.
    std::optional<double> taming_alpha;
    std::uint64_t seed = 1;

    [[nodiscard]] double h() const noexcept { return T / static_cast<double>(M); }
    [[nodiscard]] double time(std::size_t n) const noexcept { return static_cast<double>(n) * h(); }
    [[nodiscard]] double alpha_for(const ModelSpec& m) const noexcept {
        return taming_alpha.value_or(m.sigma_constant ? 1.0 : 0.5);
    }
};

/// i.i.d. Normal(mean_k, var_k) per coordinate.
struct InitialDistribution {
    std::vector<double> mean;
    std::vector<double> var;

    /// Parses "normal:m,v" or "normal:m1,v1;m2,v2;...".
    [[nodiscard]] static InitialDistribution parse(std::string_view spec);
    [[nodiscard]] std::string to_string() const;
    /// A single (mean, var) pair is broadcast to every coordinate.
    [[nodiscard]] InitialDistribution broadcast(std::size_t dim) const;
};

/// Particle i's initial position depends only on (seed, i), so systems of
/// different size share their leading particles.
[[nodiscard]] ParticleState sample_initial(const InitialDistribution& dist, std::uint64_t seed, std::size_t n,
                                           std::size_t dim);

struct StepResult {
    ParticleState state;
    NewtonReport report;
    std::vector<double> y_star;  ///< implicit stage output
};

/// One split-step update: Y* = X + h V(Y*) by Newton, then
///   X_{n+1}^i = Y*_i + b(t_n, Y*_i, mu_Y) h + sigma(t_n, Y*_i, mu_Y) dW_i.
[[nodiscard]] StepResult ssm_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                                  const SchemeParams& p, const NewtonConfig& cfg);

/// x / (1 + M^-alpha |x|), Euclidean norm, applied in place.
void tame(std::span<double> v, double M_pow_minus_alpha);

/// Explicit step with the convolution term and u tamed separately.
[[nodiscard]] ParticleState taming_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                                        const SchemeParams& p);

/// Untamed explicit Euler-Maruyama.
[[nodiscard]] ParticleState euler_step(const ParticleState& state, std::span<const double> dW, const ModelSpec& m,
                                       const SchemeParams& p);

struct RecordSpec {
    enum class Kind { terminal, full_path, thinned };
    Kind kind = Kind::terminal;
    std::size_t every = 1;

    static RecordSpec terminal() { return {Kind::terminal, 1}; }
    static RecordSpec full_path() { return {Kind::full_path, 1}; }
    static RecordSpec thinned(std::size_t k) { return {Kind::thinned, k}; }
    [[nodiscard]] static RecordSpec parse(std::string_view s);
    [[nodiscard]] std::string to_string() const;
    /// Steps kept: step 0 and multiples of `every` for paths, and always M.
    [[nodiscard]] bool keeps(std::size_t step, std::size_t M) const noexcept;
};

struct Snapshot {
    std::size_t step = 0;
    double t = 0.0;
    std::vector<double> positions;
};

struct NewtonStats {
    std::size_t solves = 0;
    std::vector<int> iterations;  ///< one entry per solve
    int max_iterations = 0;
    double max_residual = 0.0;
    std::size_t fallbacks = 0;

    void add(const NewtonReport& r);
    [[nodiscard]] double median_iterations() const;
};

struct SimulationResult {
    std::size_t dim = 1;
    std::vector<Snapshot> snapshots;
    bool diverged = false;
    std::optional<std::size_t> diverged_step;
    NewtonStats newton;

    [[nodiscard]] const Snapshot& terminal() const { return snapshots.back(); }
};

/// Observer hook called after every step with the state before and after and,
/// for the split-step scheme, the implicit stage output.
struct StepEvent {
    std::size_t step;
    const ParticleState& before;
    const ParticleState& after;
    std::span<const double> y_star;  ///< empty for explicit schemes
    const NewtonReport* report;      ///< null for explicit schemes
};
using StepObserver = std::function<void(const StepEvent&)>;

/// Applies the selected scheme M times from `initial`, drawing the N x l
/// increments of step n from `noise(n, ...)`. Non-finite states end the run
/// with `diverged` set and the last finite state recorded; solver failures
/// are rethrown as SolverError naming the step.
[[nodiscard]] SimulationResult simulate(const ModelSpec& m, const SchemeParams& p, const ParticleState& initial,
                                        const NoiseFeed& noise, const RecordSpec& record,
                                        const NewtonConfig& cfg = {}, const StepObserver& observer = {});

/// Convenience overload: samples the initial condition from `x0` with
/// p.seed and uses `plan` coarsened to the step size p.h().
[[nodiscard]] SimulationResult simulate(const ModelSpec& m, const SchemeParams& p, const InitialDistribution& x0,
                                        const NoisePlan& plan, const RecordSpec& record,
                                        const NewtonConfig& cfg = {}, const StepObserver& observer = {});

}  // namespace mfsim
