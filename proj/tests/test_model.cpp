#include "mfsim/errors.hpp"
#include "mfsim/interaction.hpp"
#include "mfsim/model.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace mfsim;

namespace {

std::vector<double> eval_f(const ModelSpec& m, std::vector<double> z) {
    std::vector<double> out(m.dim);
    m.f(z, out);
    return out;
}

std::vector<double> total_drift(const ModelSpec& m, const std::vector<double>& cloud, std::size_t i) {
    const CloudView view(cloud, m.dim);
    std::vector<double> v = drift_v(i, view, m);
    std::vector<double> b(m.dim);
    m.b(0.0, view.row(i), view, b);
    for (std::size_t k = 0; k < m.dim; ++k) v[k] += b[k];
    return v;
}

std::vector<double> gaussian_cloud(std::mt19937_64& rng, std::size_t n, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

const BuiltinModel kBuiltins[] = {BuiltinModel::granular_media, BuiltinModel::double_well,
                                  BuiltinModel::van_der_pol};

}  // namespace

TEST_CASE("built-in kernels at reference points") {
    CHECK(eval_f(make_builtin(BuiltinModel::granular_media), {2.0})[0] == -4.0);
    CHECK(eval_f(make_builtin(BuiltinModel::granular_media), {-2.0})[0] == 4.0);
    CHECK(eval_f(make_builtin(BuiltinModel::double_well), {0.0})[0] == 0.0);
    const ModelSpec vdp = make_builtin("van_der_pol");
    CHECK(eval_f(vdp, {-1.0, 0.0}) == std::vector<double>{1.0, 0.0});
    CHECK(eval_f(vdp, {1.0, 0.0}) == std::vector<double>{-1.0, 0.0});
}

TEST_CASE("built-in shapes and flags") {
    const ModelSpec g = make_builtin("granular_media");
    CHECK(g.dim == 1);
    CHECK(g.noise_dim == 1);
    CHECK(g.sigma_constant);
    std::vector<double> s(1);
    g.sigma(0.0, std::vector<double>{5.0}, CloudView(), s);
    CHECK(s[0] == std::sqrt(2.0));

    const ModelSpec dw = make_builtin("double_well");
    CHECK_FALSE(dw.sigma_constant);
    std::vector<double> u(1), b(1);
    dw.u(std::vector<double>{2.0}, CloudView(), u);
    dw.b(0.0, std::vector<double>{2.0}, CloudView(), b);
    CHECK(u[0] == -2.0);
    CHECK(b[0] == 2.0);

    const ModelSpec vdp = make_builtin("van_der_pol");
    CHECK(vdp.dim == 2);
    CHECK(vdp.noise_dim == 2);
    std::vector<double> sig(4), bb(2), uu(2);
    const std::vector<double> x{3.0, -1.0};
    vdp.sigma(0.0, x, CloudView(), sig);
    vdp.b(0.0, x, CloudView(), bb);
    vdp.u(x, CloudView(), uu);
    CHECK(sig == std::vector<double>{3.0, 0.0, 0.0, -1.0});
    CHECK(bb == std::vector<double>{16.0, 0.75});
    CHECK(uu[0] == doctest::Approx(-36.0));
    CHECK(uu[1] == 0.0);

    for (BuiltinModel b : kBuiltins) {
        const ModelSpec m = make_builtin(b);
        CHECK(m.constants.L_f == 0.0);
        CHECK(m.constants.L_u == 0.0);
        CHECK(m.constants.L_u_tilde == 0.0);
        CHECK(m.constants.C_u == 0.0);
        CHECK(m.has_analytic_gradients());
    }
}

TEST_CASE("unknown model names are configuration errors") {
    CHECK_THROWS_AS((void)make_builtin("lorenz"), ConfigError);
    CHECK(parse_builtin_model(to_string(BuiltinModel::van_der_pol)) == BuiltinModel::van_der_pol);
}

TEST_CASE("step-size rule") {
    CHECK(compute_zeta({0.0, 0.0, 0.0, 2.0, 0.0}) == 1.0);
    CHECK(compute_zeta({-1.0, -1.0, 0.0, 2.0, 0.0}) == 0.0);
    CHECK(compute_zeta({1.0, 0.0, 1.0, 2.0, 0.0}) == 7.0);
    CHECK(max_stepsize({0.0, 0.0, 0.0, 2.0, 0.0}) == 1.0);
    CHECK(max_stepsize({1.0, 0.0, 1.0, 2.0, 0.0}) == 1.0 / 7.0);
    CHECK(max_stepsize({-1.0, -1.0, 0.0, 2.0, 0.0}) == 1.0);
    // A large one-sided constant on the first branch.
    CHECK(compute_zeta({5.0, 5.0, 0.0, 2.0, 0.0}) == 31.0);
}

TEST_CASE("constant invariants") {
    ModelConstants c{-2.0, 0.0, 0.0, 2.0, 0.0};
    CHECK(c.L_f_plus() == 0.0);
    c.L_f = 0.3;
    CHECK(c.L_f_plus() == 0.3);
    CHECK_NOTHROW(c.validate());
    CHECK_THROWS_AS((ModelConstants{0, 0, -1.0, 2.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((ModelConstants{0, 0, 0.0, 0.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((ModelConstants{0, 0, 0.0, 2.0, -1.0}.validate()), ConfigError);
}

TEST_CASE("kernels are odd and one-sided Lipschitz on scaled Gaussian samples") {
    std::mt19937_64 rng(2024);
    for (BuiltinModel b : kBuiltins) {
        const ModelSpec m = make_builtin(b);
        CAPTURE(m.name);
        double worst_odd = 0.0, worst_osl = -1.0;
        for (int s = 0; s < 1000; ++s) {
            const auto x = gaussian_cloud(rng, m.dim, 10.0);
            const auto y = gaussian_cloud(rng, m.dim, 10.0);
            std::vector<double> negx(m.dim);
            for (std::size_t k = 0; k < m.dim; ++k) negx[k] = -x[k];
            const auto fx = eval_f(m, x), fy = eval_f(m, y), fnx = eval_f(m, negx);
            double inner = 0.0, norm2 = 0.0;
            for (std::size_t k = 0; k < m.dim; ++k) {
                worst_odd = std::max(worst_odd, std::abs(fx[k] + fnx[k]));
                inner += (x[k] - y[k]) * (fx[k] - fy[k]);
                norm2 += (x[k] - y[k]) * (x[k] - y[k]);
            }
            worst_osl = std::max(worst_osl, inner - m.constants.L_f * norm2);
        }
        CHECK(worst_odd == 0.0);
        CHECK(worst_osl <= 1e-9);
    }
}

TEST_CASE("kernel growth stays polynomial") {
    std::mt19937_64 rng(77);
    for (BuiltinModel b : kBuiltins) {
        const ModelSpec m = make_builtin(b);
        double worst = 0.0;
        for (int s = 0; s < 1000; ++s) {
            const auto x = gaussian_cloud(rng, m.dim, 10.0);
            const auto y = gaussian_cloud(rng, m.dim, 10.0);
            const auto fx = eval_f(m, x), fy = eval_f(m, y);
            double df = 0.0, dx = 0.0, nx = 0.0, ny = 0.0;
            for (std::size_t k = 0; k < m.dim; ++k) {
                df += (fx[k] - fy[k]) * (fx[k] - fy[k]);
                dx += (x[k] - y[k]) * (x[k] - y[k]);
                nx += x[k] * x[k];
                ny += y[k] * y[k];
            }
            const double q = m.constants.q;
            worst = std::max(worst, std::sqrt(df) / ((1.0 + std::pow(nx, q / 2) + std::pow(ny, q / 2)) * std::sqrt(dx)));
        }
        CHECK(std::isfinite(worst));
        CHECK(worst < 10.0);
    }
}

TEST_CASE("analytic gradients agree with central differences") {
    std::mt19937_64 rng(5);
    for (BuiltinModel b : kBuiltins) {
        const ModelSpec m = make_builtin(b);
        CAPTURE(m.name);
        const std::size_t d = m.dim;
        int used = 0;
        while (used < 100) {
            const auto x = gaussian_cloud(rng, d, 2.0);
            bool kink = false;
            for (double v : x) kink = kink || std::abs(v) < 1e-3;
            if (kink) continue;
            ++used;
            const auto Jf = oracle::central_jacobian([&](const std::vector<double>& z) { return eval_f(m, z); }, x,
                                                     1e-5);
            const auto Ju = oracle::central_jacobian(
                [&](const std::vector<double>& z) {
                    std::vector<double> out(d);
                    m.u(z, CloudView(), out);
                    return out;
                },
                x, 1e-5);
            std::vector<double> gf(d * d), gu(d * d);
            m.grad_f(x, gf);
            m.grad_u(x, CloudView(), gu);
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = 0; c < d; ++c) {
                    CHECK(std::abs(Jf[r][c] - gf[r * d + c]) <= 1e-6 * std::max(1.0, std::abs(gf[r * d + c])));
                    CHECK(std::abs(Ju[r][c] - gu[r * d + c]) <= 1e-6 * std::max(1.0, std::abs(gu[r * d + c])));
                }
            }
        }
    }
    std::vector<double> g(1);
    make_builtin("granular_media").grad_f(std::vector<double>{0.0}, g);
    CHECK(g[0] == 0.0);
}

TEST_CASE("identity shift leaves every evaluation bit-identical") {
    std::mt19937_64 rng(8);
    for (BuiltinModel b : kBuiltins) {
        const ModelSpec m = make_builtin(b);
        const ModelSpec s = linear_shift(m, 0.0, 0.0);
        const auto cloud = gaussian_cloud(rng, 5 * m.dim, 2.0);
        for (std::size_t i = 0; i < 5; ++i) CHECK(total_drift(m, cloud, i) == total_drift(s, cloud, i));
        CHECK(s.name == m.name);
    }
}

TEST_CASE("shift examples") {
    const ModelSpec dw = linear_shift(make_builtin("double_well"), 0.0, -1.0);
    std::vector<double> u(1), b(1);
    const std::vector<double> two{2.0};
    dw.u(two, CloudView(two, 1), u);
    dw.b(0.0, two, CloudView(two, 1), b);
    CHECK(u[0] == 0.0);
    CHECK(b[0] == 0.0);
    CHECK(dw.constants.L_u == 1.0);

    const ModelSpec g = linear_shift(make_builtin("granular_media"), 1.0, 0.0);
    CHECK(eval_f(g, {2.0})[0] == -6.0);
    CHECK(eval_f(g, {-2.0})[0] == 6.0);
    std::vector<double> bx(1);
    g.b(0.0, std::vector<double>{3.5}, CloudView(), bx);
    CHECK(bx[0] == 3.5);
    CHECK(g.constants.L_f == -1.0);
    CHECK(g.constants.L_u_tilde == 1.0);
}

TEST_CASE("shifted models keep the total drift pointwise") {
    std::mt19937_64 rng(13);
    for (BuiltinModel bm : kBuiltins) {
        const ModelSpec m = make_builtin(bm);
        for (auto [theta, gamma] : {std::pair{0.7, -0.3}, std::pair{-1.5, 2.0}, std::pair{0.0, 1.0}}) {
            const ModelSpec s = linear_shift(m, theta, gamma);
            for (int rep = 0; rep < 20; ++rep) {
                const std::size_t n = 1 + rep % 7;
                const auto cloud = gaussian_cloud(rng, n * m.dim, 3.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto a = total_drift(m, cloud, i), c = total_drift(s, cloud, i);
                    for (std::size_t k = 0; k < m.dim; ++k) {
                        CHECK(std::abs(a[k] - c[k]) <= 1e-12 * std::max(1.0, std::abs(a[k])) * 10.0);
                    }
                }
            }
        }
    }
}

TEST_CASE("validate_model passes built-ins and flags broken kernels") {
    for (BuiltinModel b : kBuiltins) {
        for (const ModelCheck& c : validate_model(make_builtin(b), 3)) {
            CAPTURE(c.name);
            CHECK(c.passed);
        }
    }
    ModelSpec bad = make_builtin("double_well");
    bad.f = [](std::span<const double> z, std::span<double> out) { out[0] = 1.0 - z[0] * z[0] * z[0]; };
    bad.grad_f = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    bad.constants.L_f = -5.0;
    int failed = 0;
    for (const ModelCheck& c : validate_model(bad, 3)) failed += c.passed ? 0 : 1;
    CHECK(failed >= 3);
}
