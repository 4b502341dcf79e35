#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mfsim {

/// Philox4x32-10 block function (Salmon et al., SC'11). Stateless: the output
/// depends only on the counter and the key.
[[nodiscard]] std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                                      std::array<std::uint32_t, 2> key) noexcept;

/// Maps two 32-bit words to a double strictly inside (0, 1): 52 random bits plus a half-ulp offset.
[[nodiscard]] double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept;

/// Inverse of the standard normal CDF, Wichura's AS241 (PPND16). Uses only
/// rational arithmetic, sqrt and log, so it gives the same bits on any
/// IEEE-754 platform with a correctly rounded log.
[[nodiscard]] double inverse_normal_cdf(double p) noexcept;

/// Standard normal draw for coordinate `coord` of the initial condition of
/// particle `particle`. Lives in a counter domain disjoint from the Brownian
/// increments.
[[nodiscard]] double initial_normal(std::uint64_t seed, std::size_t particle, std::size_t coord) noexcept;

/// Fills the N x l Brownian increments for coarse step `step`.
using NoiseFeed = std::function<void(std::size_t step, std::span<double> increments)>;

/// Reproducible fine-grid Brownian increments for up to `max_particles`
/// independent l-dimensional Brownian motions.
///
/// Increment (particle i, fine step k) is a pure function of (seed, i, k).
/// Increments are stored on the dyadic lattice 2^-40 so that sums over any
/// block of fine steps are exact: coarsening is associative bit for bit, and
/// every step size that is a multiple of `h_fine` sees the same paths.
class NoisePlan {
public:
    static constexpr int kLatticeBits = 40;

    NoisePlan(std::uint64_t seed, std::size_t max_particles, std::size_t noise_dim, double h_fine,
              std::size_t fine_steps);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::size_t max_particles() const noexcept { return max_particles_; }
    [[nodiscard]] std::size_t noise_dim() const noexcept { return noise_dim_; }
    [[nodiscard]] double h_fine() const noexcept { return h_fine_; }
    [[nodiscard]] std::size_t fine_steps() const noexcept { return fine_steps_; }

    void fine_increments(std::size_t particle, std::size_t step, std::span<double> out) const;
    [[nodiscard]] std::vector<double> fine_increments(std::size_t particle, std::size_t step) const;

    /// Sum of fine increments n*factor .. (n+1)*factor - 1, in ascending order.
    void coarsen(std::size_t factor, std::size_t particle, std::size_t coarse_step,
                 std::span<double> out) const;
    [[nodiscard]] std::vector<double> coarsen(std::size_t factor, std::size_t particle,
                                              std::size_t coarse_step) const;

    /// Integer ratio h / h_fine; throws ConfigError unless h is a multiple of
    /// h_fine (relative slack 1e-9) and the coarse grid fits the fine grid.
    [[nodiscard]] std::size_t factor_for(double h) const;

    /// Feed serving particles 0..n_particles-1 on the grid coarsened by `factor`.
    [[nodiscard]] NoiseFeed feed(std::size_t factor, std::size_t n_particles) const;

private:
    void lattice_increments(std::size_t particle, std::size_t step, std::span<std::int64_t> out) const;
    void check_indices(std::size_t particle, std::size_t step) const;

    std::uint64_t seed_;
    std::size_t max_particles_;
    std::size_t noise_dim_;
    double h_fine_;
    std::size_t fine_steps_;
    double sqrt_h_fine_;
};

}  // namespace mfsim
