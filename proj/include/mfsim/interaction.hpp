#pragma once

#include "mfsim/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mfsim {

/// Time plus an N x d row-major position array.
struct ParticleState {
    double t = 0.0;
    std::size_t dim = 1;
    std::vector<double> positions;

    [[nodiscard]] std::size_t n_particles() const noexcept { return dim == 0 ? 0 : positions.size() / dim; }
    [[nodiscard]] CloudView cloud() const noexcept { return {positions, dim}; }
    [[nodiscard]] std::span<const double> particle(std::size_t i) const {
        return std::span<const double>(positions).subspan(i * dim, dim);
    }
    [[nodiscard]] bool all_finite() const noexcept;
};

enum class SumMode {
    /// Ascending j for every particle; bit-reproducible under any chunking.
    ordered,
    /// Each pair evaluated once and applied with both signs; about twice as
    /// fast, not bit-identical to `ordered`.
    symmetric,
};

/// Mean-field drift of particle i:
///   (1/N) sum_{j=0}^{N-1} f(Y_i - Y_j) + u(Y_i, cloud).
/// The j = i term is included (it contributes f(0) = 0). Throws
/// DivergenceError naming i if the result is not finite.
void drift_v(std::size_t i, const CloudView& cloud, const ModelSpec& m, std::span<double> out);
[[nodiscard]] std::vector<double> drift_v(std::size_t i, const CloudView& cloud, const ModelSpec& m);

/// Only the convolution part (1/N) sum_j f(Y_i - Y_j).
void convolution_drift(std::size_t i, const CloudView& cloud, const ModelSpec& m, std::span<double> out);

/// Stacked system map V(Y), row i equal to drift_v(i, Y). In ordered mode the
/// rows may be split across `threads` workers without changing any bit.
void drift_V(const CloudView& cloud, const ModelSpec& m, std::span<double> out,
             SumMode mode = SumMode::ordered, std::size_t threads = 1);
[[nodiscard]] std::vector<double> drift_V(const CloudView& cloud, const ModelSpec& m,
                                          SumMode mode = SumMode::ordered, std::size_t threads = 1);

}  // namespace mfsim
