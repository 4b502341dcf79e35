#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfsim {

/// Read-only view of a particle cloud stored row-major as N rows of `dim`
/// coordinates. The empirical measure of the cloud is what the coefficient
/// functions receive in place of an abstract probability measure.
class CloudView {
public:
    CloudView() = default;
    CloudView(std::span<const double> data, std::size_t dim) : data_(data), dim_(dim) {}

    [[nodiscard]] std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return data_.subspan(i * dim_, dim_);
    }
    /// Empirical mean, accumulated in ascending particle order.
    void mean(std::span<double> out) const;

private:
    std::span<const double> data_;
    std::size_t dim_ = 0;
};

/// Regularity constants declared by a model. They feed the admissible
/// step-size interval and the runtime inequality checks of the split-step
/// scheme; they cannot be derived from black-box evaluations.
struct ModelConstants {
    double L_f = 0.0;        ///< one-sided Lipschitz constant of the kernel f
    double L_u = 0.0;        ///< one-sided Lipschitz constant of u in space
    double L_u_tilde = 0.0;  ///< Lipschitz constant of u in the measure (squared form)
    double q = 2.0;          ///< polynomial growth exponent
    double C_u = 0.0;        ///< |u(0, delta_0)|^2

    [[nodiscard]] double L_f_plus() const noexcept { return L_f > 0.0 ? L_f : 0.0; }
    /// Throws ConfigError when L_u_tilde < 0, q <= 0 or C_u < 0.
    void validate() const;
};

enum class BuiltinModel { granular_media, double_well, van_der_pol };

[[nodiscard]] std::string_view to_string(BuiltinModel m);
[[nodiscard]] BuiltinModel parse_builtin_model(std::string_view name);

/// Coefficients of a particle system
///   dX^i = ( (1/N) sum_j f(X^i - X^j) + u(X^i, mu) + b(t, X^i, mu) ) dt
///          + sigma(t, X^i, mu) dW^i
/// with mu the empirical measure of the cloud. All callables must be pure.
/// Matrices (gradients, sigma) are row-major.
struct ModelSpec {
    using Kernel = std::function<void(std::span<const double> z, std::span<double> out)>;
    using SpaceField =
        std::function<void(std::span<const double> x, const CloudView& cloud, std::span<double> out)>;
    using TimeField = std::function<void(double t, std::span<const double> x, const CloudView& cloud,
                                         std::span<double> out)>;

    std::string name;
    std::size_t dim = 1;        ///< d
    std::size_t noise_dim = 1;  ///< l
    Kernel f;
    SpaceField u;
    TimeField b;
    TimeField sigma;            ///< writes a d x l matrix
    Kernel grad_f;              ///< optional, d x d
    SpaceField grad_u;          ///< optional, d x d spatial gradient
    /// Optional constant d x d matrix K for models whose u contains a term
    /// K * mean(mu); used by the Newton Jacobian to account for the measure
    /// dependence of u. Produced by linear_shift.
    std::optional<std::vector<double>> u_mean_gradient;
    ModelConstants constants;
    bool sigma_constant = false;

    [[nodiscard]] bool has_analytic_gradients() const noexcept {
        return static_cast<bool>(grad_f) && static_cast<bool>(grad_u);
    }
};

[[nodiscard]] ModelSpec make_builtin(BuiltinModel which);
[[nodiscard]] ModelSpec make_builtin(std::string_view name);

/// zeta = max{ 2(L_f + L_u), 4 L_f^+ + 2 L_u + 2 L_u_tilde + 1, 0 }.
[[nodiscard]] double compute_zeta(const ModelConstants& c);

/// Supremum of the admissible split-step sizes: min{1, 1/zeta}, or 1 when
/// zeta = 0. Step sizes must be strictly below this value.
[[nodiscard]] double max_stepsize(const ModelConstants& c);

/// Adds and subtracts linear terms so that the total drift is unchanged:
///   f^(x) = f(x) - theta x
///   u^(x, mu) = u(x, mu) - gamma x - theta mean(mu)
///   b^(t, x, mu) = b(t, x, mu) + (gamma + theta) x
/// One-sided constants shift by the subtracted rates. The Lipschitz
/// constant of b grows; it is not tracked.
[[nodiscard]] ModelSpec linear_shift(const ModelSpec& m, double theta, double gamma);

struct ModelCheck {
    std::string name;
    bool passed = true;
    double worst = 0.0;  ///< worst observed violation (check specific)
    std::string detail;
};

/// Sampling spot checks of the structural assumptions: f(0) = 0, oddness,
/// the declared one-sided Lipschitz constant of f, and grad_f against a
/// central difference. Failures are reported, never thrown.
[[nodiscard]] std::vector<ModelCheck> validate_model(const ModelSpec& m, std::uint64_t seed,
                                                     std::size_t samples = 1000);

}  // namespace mfsim
