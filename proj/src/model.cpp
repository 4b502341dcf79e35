#include "mfsim/model.hpp"

#include "mfsim/errors.hpp"
#include "mfsim/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfsim {

void CloudView::mean(std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t n = size();
    if (n == 0) {
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = row(i);
        for (std::size_t k = 0; k < dim_; ++k) {
            out[k] += x[k];
        }
    }
    for (auto& v : out) {
        v /= static_cast<double>(n);
    }
}

void ModelConstants::validate() const {
    if (!(L_u_tilde >= 0.0)) {
        throw ConfigError("model constants: L_u_tilde must be >= 0");
    }
    if (!(q > 0.0)) {
        throw ConfigError("model constants: q must be > 0");
    }
    if (!(C_u >= 0.0)) {
        throw ConfigError("model constants: C_u must be >= 0");
    }
}

std::string_view to_string(BuiltinModel m) {
    switch (m) {
        case BuiltinModel::granular_media: return "granular_media";
        case BuiltinModel::double_well: return "double_well";
        case BuiltinModel::van_der_pol: return "van_der_pol";
    }
    return "unknown";
}

BuiltinModel parse_builtin_model(std::string_view name) {
    if (name == "granular_media") return BuiltinModel::granular_media;
    if (name == "double_well") return BuiltinModel::double_well;
    if (name == "van_der_pol") return BuiltinModel::van_der_pol;
    throw ConfigError("unknown model '" + std::string(name) +
                      "' (expected granular_media, double_well or van_der_pol)");
}

namespace {

void zero_field(std::span<const double>, const CloudView&, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
}

void zero_time_field(double, std::span<const double>, const CloudView&, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
}

ModelSpec granular_media() {
    ModelSpec m;
    m.name = "granular_media";
    m.dim = 1;
    m.noise_dim = 1;
    // -sign(z) |z|^2, the gradient of W(z) = |z|^3 / 3 with a minus sign
    m.f = [](std::span<const double> z, std::span<double> out) { out[0] = -z[0] * std::abs(z[0]); };
    m.grad_f = [](std::span<const double> z, std::span<double> out) { out[0] = -2.0 * std::abs(z[0]); };
    m.u = zero_field;
    m.grad_u = zero_field;
    m.b = zero_time_field;
    m.sigma = [](double, std::span<const double>, const CloudView&, std::span<double> out) {
        out[0] = std::sqrt(2.0);
    };
    m.constants = ModelConstants{0.0, 0.0, 0.0, 1.0, 0.0};
    m.sigma_constant = true;
    return m;
}

ModelSpec double_well() {
    ModelSpec m;
    m.name = "double_well";
    m.dim = 1;
    m.noise_dim = 1;
    m.f = [](std::span<const double> z, std::span<double> out) { out[0] = -z[0] * z[0] * z[0]; };
    m.grad_f = [](std::span<const double> z, std::span<double> out) { out[0] = -3.0 * z[0] * z[0]; };
    m.u = [](std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = -0.25 * x[0] * x[0] * x[0];
    };
    m.grad_u = [](std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = -0.75 * x[0] * x[0];
    };
    m.b = [](double, std::span<const double> x, const CloudView&, std::span<double> out) { out[0] = x[0]; };
    m.sigma = [](double, std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = x[0];
    };
    m.constants = ModelConstants{0.0, 0.0, 0.0, 2.0, 0.0};
    m.sigma_constant = false;
    return m;
}

ModelSpec van_der_pol() {
    ModelSpec m;
    m.name = "van_der_pol";
    m.dim = 2;
    m.noise_dim = 2;
    m.f = [](std::span<const double> z, std::span<double> out) {
        const double r2 = z[0] * z[0] + z[1] * z[1];
        out[0] = -z[0] * r2;
        out[1] = -z[1] * r2;
    };
    // grad(-z |z|^2) = -( |z|^2 I + 2 z z^T )
    m.grad_f = [](std::span<const double> z, std::span<double> out) {
        const double r2 = z[0] * z[0] + z[1] * z[1];
        out[0] = -(r2 + 2.0 * z[0] * z[0]);
        out[1] = -2.0 * z[0] * z[1];
        out[2] = -2.0 * z[1] * z[0];
        out[3] = -(r2 + 2.0 * z[1] * z[1]);
    };
    m.u = [](std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = -4.0 / 3.0 * x[0] * x[0] * x[0];
        out[1] = 0.0;
    };
    m.grad_u = [](std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = -4.0 * x[0] * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 0.0;
    };
    m.b = [](double, std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = 4.0 * (x[0] - x[1]);
        out[1] = 0.25 * x[0];
    };
    m.sigma = [](double, std::span<const double> x, const CloudView&, std::span<double> out) {
        out[0] = x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = x[1];
    };
    m.constants = ModelConstants{0.0, 0.0, 0.0, 2.0, 0.0};
    m.sigma_constant = false;
    return m;
}

}  // namespace

ModelSpec make_builtin(BuiltinModel which) {
    switch (which) {
        case BuiltinModel::granular_media: return granular_media();
        case BuiltinModel::double_well: return double_well();
        case BuiltinModel::van_der_pol: return van_der_pol();
    }
    throw ConfigError("unknown builtin model");
}

ModelSpec make_builtin(std::string_view name) { return make_builtin(parse_builtin_model(name)); }

double compute_zeta(const ModelConstants& c) {
    const double a = 2.0 * (c.L_f + c.L_u);
    const double b = 4.0 * c.L_f_plus() + 2.0 * c.L_u + 2.0 * c.L_u_tilde + 1.0;
    return std::max({a, b, 0.0});
}

double max_stepsize(const ModelConstants& c) {
    const double zeta = compute_zeta(c);
    if (zeta > 0.0) {
        return std::min(1.0, 1.0 / zeta);
    }
    return 1.0;
}

ModelSpec linear_shift(const ModelSpec& m, double theta, double gamma) {
    if (theta == 0.0 && gamma == 0.0) {
        return m;
    }
    ModelSpec s = m;
    const std::size_t d = m.dim;
    s.name = m.name + "+shift";

    s.f = [f = m.f, theta](std::span<const double> z, std::span<double> out) {
        f(z, out);
        for (std::size_t k = 0; k < z.size(); ++k) {
            out[k] -= theta * z[k];
        }
    };
    s.u = [u = m.u, theta, gamma, d](std::span<const double> x, const CloudView& cloud,
                                     std::span<double> out) {
        u(x, cloud, out);
        std::vector<double> mean(d);
        cloud.mean(mean);
        for (std::size_t k = 0; k < d; ++k) {
            out[k] -= gamma * x[k];
            out[k] -= theta * mean[k];
        }
    };
    s.b = [b = m.b, rate = gamma + theta](double t, std::span<const double> x, const CloudView& cloud,
                                          std::span<double> out) {
        b(t, x, cloud, out);
        for (std::size_t k = 0; k < x.size(); ++k) {
            out[k] += rate * x[k];
        }
    };
    if (m.grad_f) {
        s.grad_f = [g = m.grad_f, theta, d](std::span<const double> z, std::span<double> out) {
            g(z, out);
            for (std::size_t k = 0; k < d; ++k) {
                out[k * d + k] -= theta;
            }
        };
    }
    if (m.grad_u) {
        s.grad_u = [g = m.grad_u, gamma, d](std::span<const double> x, const CloudView& cloud,
                                            std::span<double> out) {
            g(x, cloud, out);
            for (std::size_t k = 0; k < d; ++k) {
                out[k * d + k] -= gamma;
            }
        };
    }
    std::vector<double> K = m.u_mean_gradient.value_or(std::vector<double>(d * d, 0.0));
    for (std::size_t k = 0; k < d; ++k) {
        K[k * d + k] -= theta;
    }
    s.u_mean_gradient = std::move(K);

    s.constants.L_f = m.constants.L_f - theta;
    s.constants.L_u = m.constants.L_u - gamma;
    // |u^(x,mu) - u^(x,mu')|^2 <= (sqrt(L_u_tilde) + |theta|)^2 W2(mu,mu')^2
    const double root = std::sqrt(m.constants.L_u_tilde) + std::abs(theta);
    s.constants.L_u_tilde = root * root;
    return s;
}

std::vector<ModelCheck> validate_model(const ModelSpec& m, std::uint64_t seed, std::size_t samples) {
    const std::size_t d = m.dim;
    std::vector<ModelCheck> checks;
    std::vector<double> x(d), y(d), fx(d), fy(d), diff(d);

    auto draw = [&](std::size_t idx, std::span<double> out, double scale) {
        for (std::size_t k = 0; k < d; ++k) {
            out[k] = scale * initial_normal(seed, idx, k);
        }
    };

    {
        ModelCheck c{"f(0) = 0", true, 0.0, ""};
        std::vector<double> zero(d, 0.0);
        m.f(zero, fx);
        for (double v : fx) c.worst = std::max(c.worst, std::abs(v));
        c.passed = c.worst == 0.0;
        checks.push_back(c);
    }
    {
        ModelCheck c{"f odd", true, 0.0, ""};
        for (std::size_t s = 0; s < samples; ++s) {
            draw(s, x, 10.0);
            for (std::size_t k = 0; k < d; ++k) y[k] = -x[k];
            m.f(x, fx);
            m.f(y, fy);
            for (std::size_t k = 0; k < d; ++k) {
                const double scale = std::max(1.0, std::abs(fx[k]));
                c.worst = std::max(c.worst, std::abs(fx[k] + fy[k]) / scale);
            }
        }
        c.passed = c.worst <= 1e-12;
        checks.push_back(c);
    }
    {
        ModelCheck c{"one-sided Lipschitz of f", true, 0.0, ""};
        for (std::size_t s = 0; s < samples; ++s) {
            draw(2 * s + samples, x, 10.0);
            draw(2 * s + 1 + samples, y, 10.0);
            m.f(x, fx);
            m.f(y, fy);
            double inner = 0.0, norm2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                inner += (x[k] - y[k]) * (fx[k] - fy[k]);
                norm2 += (x[k] - y[k]) * (x[k] - y[k]);
            }
            c.worst = std::max(c.worst, inner - m.constants.L_f * norm2);
        }
        c.passed = c.worst <= 1e-9;
        checks.push_back(c);
    }
    if (m.grad_f) {
        ModelCheck c{"grad_f matches central difference", true, 0.0, ""};
        std::vector<double> g(d * d), xp(d), xm(d), fp(d), fm(d);
        const double step = 1e-5;
        std::size_t used = 0;
        for (std::size_t s = 0; used < 100 && s < 10 * samples; ++s) {
            draw(s + 3 * samples, x, 2.0);
            bool near_kink = false;
            for (double v : x) near_kink = near_kink || std::abs(v) < 1e-3;
            if (near_kink) continue;
            ++used;
            m.grad_f(x, g);
            for (std::size_t col = 0; col < d; ++col) {
                xp = x;
                xm = x;
                xp[col] += step;
                xm[col] -= step;
                m.f(xp, fp);
                m.f(xm, fm);
                for (std::size_t row = 0; row < d; ++row) {
                    const double fd = (fp[row] - fm[row]) / (2.0 * step);
                    const double an = g[row * d + col];
                    const double rel = std::abs(fd - an) / std::max(1.0, std::abs(an));
                    c.worst = std::max(c.worst, rel);
                }
            }
        }
        c.passed = c.worst <= 1e-6;
        checks.push_back(c);
    }
    try {
        m.constants.validate();
        checks.push_back({"declared constants valid", true, 0.0, ""});
    } catch (const ConfigError& e) {
        checks.push_back({"declared constants valid", false, 0.0, e.what()});
    }
    return checks;
}

}  // namespace mfsim
