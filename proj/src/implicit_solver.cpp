#include "mfsim/implicit_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace mfsim {

std::string_view to_string(ToleranceMode m) {
    return m == ToleranceMode::sqrt_h ? "sqrt-h" : "abs";
}

std::string_view to_string(JacobianMode m) {
    switch (m) {
        case JacobianMode::full: return "full";
        case JacobianMode::drop_gamma: return "drop-gamma";
        case JacobianMode::finite_difference: return "fd";
    }
    return "unknown";
}

std::string_view to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::newton: return "newton";
        case SolveMethod::damped_newton: return "damped-newton";
        case SolveMethod::fixed_point: return "fixed-point";
    }
    return "unknown";
}

ToleranceMode parse_tolerance_mode(std::string_view s) {
    if (s == "sqrt-h" || s == "sqrt_h") return ToleranceMode::sqrt_h;
    if (s == "abs" || s == "absolute") return ToleranceMode::absolute;
    throw ConfigError("unknown Newton tolerance mode '" + std::string(s) + "' (expected sqrt-h or abs)");
}

JacobianMode parse_jacobian_mode(std::string_view s) {
    if (s == "full") return JacobianMode::full;
    if (s == "drop-gamma" || s == "drop_gamma") return JacobianMode::drop_gamma;
    if (s == "fd" || s == "finite_difference") return JacobianMode::finite_difference;
    throw ConfigError("unknown Jacobian mode '" + std::string(s) + "' (expected full, drop-gamma or fd)");
}

void NewtonConfig::validate() const {
    if (!(abs_tol > 0.0)) {
        throw ConfigError("newton: abs_tol must be > 0");
    }
    if (max_iter < 1) {
        throw ConfigError("newton: max_iter must be >= 1");
    }
    if (!(damping > 0.0 && damping <= 1.0)) {
        throw ConfigError("newton: damping must lie in (0, 1]");
    }
}

double NewtonConfig::tolerance(double h) const {
    return tol_mode == ToleranceMode::sqrt_h ? std::sqrt(h) : abs_tol;
}

namespace {

double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        const double a = std::abs(x);
        if (!(a <= m)) {
            m = a;  // also propagates NaN
        }
    }
    return m;
}

void require_gradients(const ModelSpec& m) {
    if (!m.has_analytic_gradients()) {
        throw ConfigError("model '" + m.name +
                          "' has no analytic gradients; use the finite-difference Jacobian");
    }
}

// Diagonal blocks I - h A_i (and the Gamma / K contributions when requested)
// written into a dense matrix or, for the block-diagonal mode, into `blocks`.
void fill_analytic(const CloudView& y, double h, const ModelSpec& m, bool with_gamma, Eigen::MatrixXd* dense,
                   std::vector<Eigen::MatrixXd>* blocks) {
    const std::size_t n = y.size();
    const std::size_t d = y.dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> z(d), g(d * d), gu(d * d);
    Eigen::MatrixXd a_sum(d, d);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, d);
    if (m.u_mean_gradient) {
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) K(r, c) = (*m.u_mean_gradient)[r * d + c];
    }
    for (std::size_t i = 0; i < n; ++i) {
        a_sum.setZero();
        const auto yi = y.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto yj = y.row(j);
            for (std::size_t k = 0; k < d; ++k) z[k] = yi[k] - yj[k];
            m.grad_f(z, g);
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = 0; c < d; ++c) {
                    a_sum(r, c) += g[r * d + c];
                    if (with_gamma) {
                        (*dense)(i * d + r, j * d + c) += h * inv_n * (g[r * d + c] - K(r, c));
                    }
                }
            }
        }
        m.grad_u(yi, y, gu);
        Eigen::MatrixXd block = Eigen::MatrixXd::Identity(d, d);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                block(r, c) -= h * (gu[r * d + c] + a_sum(r, c) * inv_n);
            }
        }
        if (!with_gamma) {
            block -= h * inv_n * K;
        }
        if (dense) {
            dense->block(i * d, i * d, d, d) += block;
        } else {
            (*blocks)[i] = std::move(block);
        }
    }
}

Eigen::MatrixXd finite_difference_jacobian(const CloudView& y, double h, const ModelSpec& m) {
    const std::size_t nd = y.data().size();
    const std::size_t d = y.dim();
    std::vector<double> base(y.data().begin(), y.data().end());
    std::vector<double> zero(nd, 0.0), f0(nd), f1(nd);
    implicit_residual(y, zero, h, m, f0);
    const double step = std::max(1e-7, 1e-7 * inf_norm(base));
    Eigen::MatrixXd J(nd, nd);
    std::vector<double> shifted = base;
    for (std::size_t c = 0; c < nd; ++c) {
        shifted[c] = base[c] + step;
        const double actual = shifted[c] - base[c];
        implicit_residual(CloudView(shifted, d), zero, h, m, f1);
        for (std::size_t r = 0; r < nd; ++r) {
            J(r, c) = (f1[r] - f0[r]) / actual;
        }
        shifted[c] = base[c];
    }
    return J;
}

struct Attempt {
    std::vector<double> y;
    NewtonReport report;
};

Attempt newton(const CloudView& x, std::span<const double> guess, double h, const ModelSpec& m,
               const NewtonConfig& cfg, double damping, SolveMethod method) {
    const std::size_t d = x.dim();
    const std::size_t n = x.size();
    const std::size_t nd = n * d;
    const double tol = cfg.tolerance(h);

    Attempt out;
    out.report.jacobian_mode_used = cfg.jacobian_mode;
    out.report.method = method;
    out.y.assign(guess.begin(), guess.end());
    std::vector<double> F(nd), y_new(nd);
    try {
        implicit_residual(CloudView(out.y, d), x.data(), h, m, F);
    } catch (const DivergenceError&) {
        out.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
        return out;
    }

    std::vector<Eigen::MatrixXd> blocks;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const CloudView yv(out.y, d);
        Eigen::Map<const Eigen::VectorXd> Fv(F.data(), static_cast<Eigen::Index>(nd));
        Eigen::VectorXd delta(nd);
        if (cfg.jacobian_mode == JacobianMode::drop_gamma) {
            blocks.resize(n);
            fill_analytic(yv, h, m, false, nullptr, &blocks);
            for (std::size_t i = 0; i < n; ++i) {
                delta.segment(i * d, d) = blocks[i].partialPivLu().solve(Fv.segment(i * d, d));
            }
        } else {
            const Eigen::MatrixXd J = assemble_jacobian(yv, h, m, cfg.jacobian_mode);
            delta = J.partialPivLu().solve(Fv);
        }
        for (std::size_t k = 0; k < nd; ++k) {
            y_new[k] = out.y[k] - damping * delta[static_cast<Eigen::Index>(k)];
        }
        double step = 0.0;
        for (std::size_t k = 0; k < nd; ++k) {
            const double s = std::abs(y_new[k] - out.y[k]);
            if (!(s <= step)) step = s;
        }
        out.report.iterations = it;
        out.report.final_step_inf_norm = step;
        if (!std::isfinite(step)) {
            out.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
            return out;
        }
        out.y.swap(y_new);
        try {
            implicit_residual(CloudView(out.y, d), x.data(), h, m, F);
        } catch (const DivergenceError&) {
            out.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
            return out;
        }
        out.report.final_residual_inf_norm = inf_norm(F);
        if (step < tol && out.report.final_residual_inf_norm < tol) {
            out.report.converged = true;
            return out;
        }
    }
    return out;
}

void check_step(double h, const ModelSpec& m, const NewtonConfig& cfg) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw ConfigError("implicit solve: step size must be positive");
    }
    if (!cfg.allow_any_step) {
        const double hmax = max_stepsize(m.constants);
        if (!(h < hmax)) {
            std::ostringstream msg;
            msg << "step size h = " << h << " is not below the admissible bound min{1, 1/zeta} = " << hmax
                << " for model '" << m.name << "' (use --force to override)";
            throw ConfigError(msg.str());
        }
    }
}

}  // namespace

void implicit_residual(const CloudView& y, std::span<const double> x, double h, const ModelSpec& m,
                       std::span<double> out) {
    drift_V(y, m, out);
    const auto yd = y.data();
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = yd[k] - x[k] - h * out[k];
    }
}

Eigen::MatrixXd assemble_jacobian(const CloudView& y, double h, const ModelSpec& m, JacobianMode mode) {
    const auto nd = static_cast<Eigen::Index>(y.data().size());
    if (mode == JacobianMode::finite_difference) {
        return finite_difference_jacobian(y, h, m);
    }
    require_gradients(m);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nd, nd);
    fill_analytic(y, h, m, mode == JacobianMode::full, &J, nullptr);
    return J;
}

ImplicitSolution solve_fixed_point(const CloudView& x, double h, const ModelSpec& m, double tol,
                                   int max_sweeps) {
    const std::size_t d = x.dim();
    const std::size_t nd = x.data().size();
    ImplicitSolution sol;
    sol.report.method = SolveMethod::fixed_point;
    sol.y.assign(x.data().begin(), x.data().end());
    std::vector<double> v(nd), y_new(nd), F(nd);
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        try {
            drift_V(CloudView(sol.y, d), m, v);
        } catch (const DivergenceError&) {
            sol.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
            return sol;
        }
        double step = 0.0;
        for (std::size_t k = 0; k < nd; ++k) {
            y_new[k] = x.data()[k] + h * v[k];
            const double s = std::abs(y_new[k] - sol.y[k]);
            if (!(s <= step)) step = s;
        }
        sol.y.swap(y_new);
        sol.report.iterations = sweep;
        sol.report.final_step_inf_norm = step;
        if (!std::isfinite(step)) {
            sol.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
            return sol;
        }
        if (step < tol) {
            try {
                implicit_residual(CloudView(sol.y, d), x.data(), h, m, F);
            } catch (const DivergenceError&) {
                sol.report.final_residual_inf_norm = std::numeric_limits<double>::infinity();
                return sol;
            }
            sol.report.final_residual_inf_norm = inf_norm(F);
            if (sol.report.final_residual_inf_norm < tol) {
                sol.report.converged = true;
                return sol;
            }
        }
    }
    return sol;
}

ImplicitSolution solve_implicit_from(const CloudView& x, std::span<const double> guess, double h,
                                     const ModelSpec& m, const NewtonConfig& cfg) {
    cfg.validate();
    check_step(h, m, cfg);
    if (cfg.jacobian_mode != JacobianMode::finite_difference) {
        require_gradients(m);
    }

    Attempt first = newton(x, guess, h, m, cfg, cfg.damping, SolveMethod::newton);
    if (first.report.converged) {
        return {std::move(first.y), first.report};
    }
    Attempt damped = newton(x, x.data(), h, m, cfg, cfg.damping * 0.5, SolveMethod::damped_newton);
    if (damped.report.converged) {
        return {std::move(damped.y), damped.report};
    }
    ImplicitSolution fp = solve_fixed_point(x, h, m, cfg.tolerance(h), 200);
    fp.report.jacobian_mode_used = cfg.jacobian_mode;
    if (fp.report.converged) {
        return fp;
    }
    std::ostringstream msg;
    msg << "implicit solve failed: Newton, damped Newton and fixed-point iteration did not converge (h = " << h
        << ", last step " << fp.report.final_step_inf_norm << ")";
    throw SolverError(msg.str(), damped.report);
}

ImplicitSolution solve_implicit(const CloudView& x, double h, const ModelSpec& m, const NewtonConfig& cfg) {
    return solve_implicit_from(x, x.data(), h, m, cfg);
}

double differences_relationship_violation(const CloudView& x, const CloudView& y, double h,
                                          const ModelConstants& c) {
    const double denom = 1.0 - 2.0 * (c.L_f + c.L_u) * h;
    if (!(denom > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    const std::size_t n = x.size();
    const std::size_t d = x.dim();
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dy = 0.0, dx = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double a = y.row(i)[k] - y.row(j)[k];
                const double b = x.row(i)[k] - x.row(j)[k];
                dy += a * a;
                dx += b * b;
            }
            worst = std::max(worst, dy - dx / denom);
        }
    }
    return worst;
}

double summation_relationship_violation(const CloudView& x, const CloudView& y, double h,
                                        const ModelConstants& c) {
    const double lambda = 4.0 * c.L_f_plus() + 2.0 * c.L_u + 2.0 * c.L_u_tilde + 1.0;
    const double denom = 1.0 - lambda * h;
    if (!(denom > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    double sy = 0.0, sx = 0.0;
    for (double v : y.data()) sy += v * v;
    for (double v : x.data()) sx += v * v;
    const double n = static_cast<double>(x.size());
    return sy - (sx + 2.0 * n * c.C_u * h) / denom;
}

}  // namespace mfsim
