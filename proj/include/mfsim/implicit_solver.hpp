#pragma once

#include "mfsim/errors.hpp"
#include "mfsim/interaction.hpp"
#include "mfsim/model.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace mfsim {

enum class ToleranceMode {
    sqrt_h,    ///< stop when ||y^k - y^{k-1}||_inf < sqrt(h)
    absolute,  ///< stop when ||y^k - y^{k-1}||_inf < abs_tol
};

enum class JacobianMode {
    full,               ///< I - hA + (h/N) Gamma
    drop_gamma,         ///< I - hA, block diagonal
    finite_difference,  ///< forward differences of F
};

enum class SolveMethod { newton, damped_newton, fixed_point };

[[nodiscard]] std::string_view to_string(ToleranceMode m);
[[nodiscard]] std::string_view to_string(JacobianMode m);
[[nodiscard]] std::string_view to_string(SolveMethod m);
[[nodiscard]] ToleranceMode parse_tolerance_mode(std::string_view s);
[[nodiscard]] JacobianMode parse_jacobian_mode(std::string_view s);

struct NewtonConfig {
    ToleranceMode tol_mode = ToleranceMode::sqrt_h;
    double abs_tol = 1e-8;
    int max_iter = 25;
    JacobianMode jacobian_mode = JacobianMode::full;
    double damping = 1.0;
    /// Skip the admissible step-size check.
    bool allow_any_step = false;

    void validate() const;
    [[nodiscard]] double tolerance(double h) const;
};

struct NewtonReport {
    int iterations = 0;  ///< updates performed by the method that finished
    double final_step_inf_norm = 0.0;
    double final_residual_inf_norm = 0.0;
    JacobianMode jacobian_mode_used = JacobianMode::full;
    SolveMethod method = SolveMethod::newton;
    bool converged = false;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, NewtonReport report) : Error(what), report_(report) {}
    [[nodiscard]] const NewtonReport& report() const noexcept { return report_; }

private:
    NewtonReport report_;
};

struct ImplicitSolution {
    std::vector<double> y;
    NewtonReport report;
};

/// Jacobian of F(y) = y - x - h V(y) at y (x does not enter). Block (i, k) of
/// the full matrix is
///   delta_ik [ I - h (grad u(y_i) + (1/N) sum_j grad f(y_i - y_j)) ]
///   + (h/N) grad f(y_i - y_k)  - (h/N) K
/// with K the model's u_mean_gradient (zero when absent).
[[nodiscard]] Eigen::MatrixXd assemble_jacobian(const CloudView& y, double h, const ModelSpec& m, JacobianMode mode);

/// F(y) = y - x - h V(y), written to out.
void implicit_residual(const CloudView& y, std::span<const double> x, double h, const ModelSpec& m,
                       std::span<double> out);

/// Solves y = x + h V(y) starting from y^0 = x. On Newton failure retries once
/// with halved damping, then falls back to the fixed-point sweep
/// y <- x + h V(y) (at most 200 sweeps) under the same stop rule. Throws
/// ConfigError for an inadmissible h and SolverError if every stage fails.
[[nodiscard]] ImplicitSolution solve_implicit(const CloudView& x, double h, const ModelSpec& m,
                                              const NewtonConfig& cfg);

/// Same as solve_implicit but starting from an arbitrary guess.
[[nodiscard]] ImplicitSolution solve_implicit_from(const CloudView& x, std::span<const double> guess, double h,
                                                   const ModelSpec& m, const NewtonConfig& cfg);

/// Runs only the fixed-point sweep; used as an independent route in tests.
[[nodiscard]] ImplicitSolution solve_fixed_point(const CloudView& x, double h, const ModelSpec& m,
                                                 double tol, int max_sweeps);

/// Largest violation of |Y_i - Y_j|^2 <= |X_i - X_j|^2 / (1 - 2 (L_f + L_u) h)
/// over all pairs (negative when every pair satisfies it with margin).
[[nodiscard]] double differences_relationship_violation(const CloudView& x, const CloudView& y, double h,
                                                        const ModelConstants& c);

/// sum |Y_i|^2 - (sum |X_i|^2 + 2 N C_u h) / (1 - Lambda h),
/// Lambda = 4 L_f^+ + 2 L_u + 2 L_u_tilde + 1.
[[nodiscard]] double summation_relationship_violation(const CloudView& x, const CloudView& y, double h,
                                                      const ModelConstants& c);

}  // namespace mfsim
