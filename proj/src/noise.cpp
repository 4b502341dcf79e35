#include "mfsim/noise.hpp"

#include "mfsim/errors.hpp"

#include <cmath>
#include <string>

namespace mfsim {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

// Counter word 3 carries the normal-pair block index; initial-condition
// draws set the top bit so the two domains never collide.
constexpr std::uint32_t kInitialDomain = 0x80000000u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 2> split_key(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Two standard normals by inversion of one Philox block.
void block_normals(const std::array<std::uint32_t, 4>& ctr, const std::array<std::uint32_t, 2>& key,
                   double& z0, double& z1) noexcept {
    const auto r = philox4x32(ctr, key);
    z0 = inverse_normal_cdf(to_open_unit(r[0], r[1]));
    z1 = inverse_normal_cdf(to_open_unit(r[2], r[3]));
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

double inverse_normal_cdf(double p) noexcept {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
                 4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
                 2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                 1.27045825245236838258e+0) * r + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                 1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        value = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                 2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                 7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        value = num / den;
    }
    return q < 0.0 ? -value : value;
}

double initial_normal(std::uint64_t seed, std::size_t particle, std::size_t coord) noexcept {
    const std::array<std::uint32_t, 4> ctr{0u, 0u, static_cast<std::uint32_t>(particle),
                                           kInitialDomain | static_cast<std::uint32_t>(coord / 2)};
    double z0, z1;
    block_normals(ctr, split_key(seed), z0, z1);
    return coord % 2 == 0 ? z0 : z1;
}

NoisePlan::NoisePlan(std::uint64_t seed, std::size_t max_particles, std::size_t noise_dim, double h_fine,
                     std::size_t fine_steps)
    : seed_(seed),
      max_particles_(max_particles),
      noise_dim_(noise_dim),
      h_fine_(h_fine),
      fine_steps_(fine_steps),
      sqrt_h_fine_(std::sqrt(h_fine)) {
    if (max_particles == 0 || noise_dim == 0) {
        throw ConfigError("noise plan: particle count and noise dimension must be positive");
    }
    if (!(h_fine > 0.0) || !std::isfinite(h_fine)) {
        throw ConfigError("noise plan: h_fine must be positive");
    }
    if (max_particles > 0xFFFFFFFFull || noise_dim > 2 * 0x7FFFFFFFull) {
        throw ConfigError("noise plan: index space exceeded");
    }
}

void NoisePlan::check_indices(std::size_t particle, std::size_t step) const {
    if (particle >= max_particles_) {
        throw ConfigError("noise plan: particle index " + std::to_string(particle) + " out of range (N_max = " +
                          std::to_string(max_particles_) + ")");
    }
    if (step >= fine_steps_) {
        throw ConfigError("noise plan: fine step " + std::to_string(step) + " out of range (M_fine = " +
                          std::to_string(fine_steps_) + ")");
    }
}

void NoisePlan::lattice_increments(std::size_t particle, std::size_t step, std::span<std::int64_t> out) const {
    const auto key = split_key(seed_);
    const double scale = sqrt_h_fine_ * 0x1.0p40;
    for (std::size_t c = 0; c < noise_dim_; c += 2) {
        const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(step),
                                               static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32),
                                               static_cast<std::uint32_t>(particle),
                                               static_cast<std::uint32_t>(c / 2)};
        double z0, z1;
        block_normals(ctr, key, z0, z1);
        out[c] = std::llround(z0 * scale);
        if (c + 1 < noise_dim_) {
            out[c + 1] = std::llround(z1 * scale);
        }
    }
}

void NoisePlan::fine_increments(std::size_t particle, std::size_t step, std::span<double> out) const {
    coarsen(1, particle, step, out);
}

std::vector<double> NoisePlan::fine_increments(std::size_t particle, std::size_t step) const {
    std::vector<double> out(noise_dim_);
    fine_increments(particle, step, out);
    return out;
}

void NoisePlan::coarsen(std::size_t factor, std::size_t particle, std::size_t coarse_step,
                        std::span<double> out) const {
    if (factor == 0 || fine_steps_ % factor != 0) {
        throw ConfigError("noise plan: coarsening factor " + std::to_string(factor) +
                          " does not divide the fine grid (M_fine = " + std::to_string(fine_steps_) + ")");
    }
    const std::size_t first = coarse_step * factor;
    check_indices(particle, first);
    std::vector<std::int64_t> sum(noise_dim_, 0), one(noise_dim_);
    for (std::size_t k = first; k < first + factor; ++k) {
        lattice_increments(particle, k, one);
        for (std::size_t c = 0; c < noise_dim_; ++c) {
            sum[c] += one[c];
        }
    }
    for (std::size_t c = 0; c < noise_dim_; ++c) {
        out[c] = static_cast<double>(sum[c]) * 0x1.0p-40;
    }
}

std::vector<double> NoisePlan::coarsen(std::size_t factor, std::size_t particle, std::size_t coarse_step) const {
    std::vector<double> out(noise_dim_);
    coarsen(factor, particle, coarse_step, out);
    return out;
}

std::size_t NoisePlan::factor_for(double h) const {
    const double ratio = h / h_fine_;
    const double rounded = std::round(ratio);
    if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-9 * rounded) {
        throw ConfigError("step size " + std::to_string(h) + " is not an integer multiple of h_fine = " +
                          std::to_string(h_fine_));
    }
    const auto factor = static_cast<std::size_t>(rounded);
    if (fine_steps_ % factor != 0) {
        throw ConfigError("step size " + std::to_string(h) + " does not tile the fine grid");
    }
    return factor;
}

NoiseFeed NoisePlan::feed(std::size_t factor, std::size_t n_particles) const {
    if (n_particles > max_particles_) {
        throw ConfigError("noise plan serves at most " + std::to_string(max_particles_) + " particles, " +
                          std::to_string(n_particles) + " requested");
    }
    if (factor == 0 || fine_steps_ % factor != 0) {
        throw ConfigError("noise plan: coarsening factor does not divide the fine grid");
    }
    return [plan = *this, factor, n_particles](std::size_t step, std::span<double> inc) {
        const std::size_t l = plan.noise_dim_;
        for (std::size_t i = 0; i < n_particles; ++i) {
            plan.coarsen(factor, i, step, inc.subspan(i * l, l));
        }
    };
}

}  // namespace mfsim
