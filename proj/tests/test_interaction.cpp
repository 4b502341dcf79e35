#include "mfsim/errors.hpp"
#include "mfsim/interaction.hpp"
#include "mfsim/model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace mfsim;

namespace {

ModelSpec without_u(ModelSpec m) {
    m.u = [](std::span<const double>, const CloudView&, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    return m;
}

std::vector<double> random_cloud(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n * d);
    for (double& x : v) x = g(rng);
    return v;
}

}  // namespace

TEST_CASE("single-particle and pair examples") {
    const ModelSpec dw = make_builtin("double_well");
    const std::vector<double> one{2.0};
    CHECK(drift_v(0, CloudView(one, 1), dw)[0] == -2.0);

    const ModelSpec g = make_builtin("granular_media");
    const std::vector<double> pair{1.0, -1.0};
    CHECK(drift_v(0, CloudView(pair, 1), g)[0] == -2.0);
    CHECK(drift_V(CloudView(pair, 1), g) == std::vector<double>{-2.0, 2.0});

    const std::vector<double> three{0.0, 1.0, -1.0};
    CHECK(drift_v(0, CloudView(three, 1), g)[0] == 0.0);
}

TEST_CASE("null drift and collapsed clouds") {
    ModelSpec zero = without_u(make_builtin("van_der_pol"));
    zero.f = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    std::mt19937_64 rng(1);
    const auto cloud = random_cloud(rng, 6, 2, 1.0);
    const auto v = drift_V(CloudView(cloud, 2), zero);
    CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));

    const ModelSpec vdp = make_builtin("van_der_pol");
    const std::vector<double> same{1.5, -0.5, 1.5, -0.5, 1.5, -0.5};
    const auto w = drift_V(CloudView(same, 2), vdp);
    std::vector<double> u(2);
    vdp.u(std::vector<double>{1.5, -0.5}, CloudView(same, 2), u);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(w[2 * i] == u[0]);
        CHECK(w[2 * i + 1] == u[1]);
    }
}

TEST_CASE("pairwise terms cancel when u vanishes") {
    std::mt19937_64 rng(2);
    for (const char* name : {"granular_media", "double_well", "van_der_pol"}) {
        const ModelSpec m = without_u(make_builtin(name));
        for (std::size_t n : {2u, 7u, 50u}) {
            const auto cloud = random_cloud(rng, n, m.dim, 1.0);
            const auto v = drift_V(CloudView(cloud, m.dim), m);
            for (std::size_t k = 0; k < m.dim; ++k) {
                double sum = 0.0, scale = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sum += v[i * m.dim + k];
                    scale = std::max(scale, std::abs(v[i * m.dim + k]));
                }
                CHECK(std::abs(sum) <= static_cast<double>(n * m.dim) * 1e-12 * std::max(1.0, scale));
            }
        }
    }
}

TEST_CASE("stacked map matches the per-particle drift bit for bit, for any worker count") {
    std::mt19937_64 rng(3);
    for (const char* name : {"granular_media", "double_well", "van_der_pol"}) {
        const ModelSpec m = make_builtin(name);
        const std::size_t n = 37;
        const auto cloud = random_cloud(rng, n, m.dim, 2.0);
        const CloudView view(cloud, m.dim);
        const auto serial = drift_V(view, m);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = drift_v(i, view, m);
            for (std::size_t k = 0; k < m.dim; ++k) CHECK(serial[i * m.dim + k] == row[k]);
        }
        for (std::size_t threads : {2u, 3u, 8u}) CHECK(drift_V(view, m, SumMode::ordered, threads) == serial);

        const auto sym = drift_V(view, m, SumMode::symmetric);
        for (std::size_t j = 0; j < sym.size(); ++j) {
            CHECK(std::abs(sym[j] - serial[j]) <= 1e-12 * std::max(1.0, std::abs(serial[j])));
        }
    }
}

TEST_CASE("permuting particles permutes the drift") {
    std::mt19937_64 rng(4);
    const ModelSpec m = make_builtin("van_der_pol");
    const std::size_t n = 11, d = 2;
    const auto cloud = random_cloud(rng, n, d, 1.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) permuted[i * d + k] = cloud[perm[i] * d + k];
    }
    const auto a = drift_V(CloudView(cloud, d), m);
    const auto b = drift_V(CloudView(permuted, d), m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            const double x = a[perm[i] * d + k], y = b[i * d + k];
            CHECK(std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(x)));
        }
    }
}

TEST_CASE("stacked map is one-sided Lipschitz") {
    std::mt19937_64 rng(6);
    for (const char* name : {"granular_media", "double_well", "van_der_pol"}) {
        const ModelSpec m = without_u(make_builtin(name));
        const double bound = 2.0 * m.constants.L_f_plus() + 0.5;
        for (int rep = 0; rep < 200; ++rep) {
            const std::size_t n = 2 + rep % 9;
            const auto y = random_cloud(rng, n, m.dim, 3.0);
            const auto z = random_cloud(rng, n, m.dim, 3.0);
            const auto vy = drift_V(CloudView(y, m.dim), m);
            const auto vz = drift_V(CloudView(z, m.dim), m);
            double inner = 0.0, norm2 = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                inner += (y[j] - z[j]) * (vy[j] - vz[j]);
                norm2 += (y[j] - z[j]) * (y[j] - z[j]);
            }
            CHECK(inner <= bound * norm2 + 1e-9);
        }
    }
}

TEST_CASE("non-finite drift names the particle") {
    const ModelSpec dw = make_builtin("double_well");
    const std::vector<double> cloud{0.5, 1e200, -0.5};
    try {
        (void)drift_V(CloudView(cloud, 1), dw);
        FAIL("expected a divergence error");
    } catch (const DivergenceError& e) {
        CHECK(e.particle() == 0);
    }
    const std::vector<double> lone{0.0, 1e200};
    ModelSpec m = without_u(dw);
    try {
        (void)drift_v(1, CloudView(lone, 1), m);
        FAIL("expected a divergence error");
    } catch (const DivergenceError& e) {
        CHECK(e.particle() == 1);
    }
}
