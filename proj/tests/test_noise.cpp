#include "mfsim/errors.hpp"
#include "mfsim/noise.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace mfsim;

TEST_CASE("philox known-answer vectors") {
    using Ctr = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;
    CHECK(philox4x32(Ctr{0, 0, 0, 0}, Key{0, 0}) == Ctr{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32(Ctr{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, Key{0xffffffff, 0xffffffff}) ==
          Ctr{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32(Ctr{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, Key{0xa4093822, 0x299f31d0}) ==
          Ctr{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("open unit interval excludes both ends") {
    CHECK(to_open_unit(0, 0) > 0.0);
    CHECK(to_open_unit(0xffffffff, 0xffffffff) < 1.0);
    CHECK(to_open_unit(0x80000000, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("inverse normal cdf inverts the erfc-based cdf") {
    CHECK(inverse_normal_cdf(0.5) == 0.0);
    // Only the lower tail: for x > 0 the cdf value itself loses the digits.
    for (double x = -8.0; x <= 0.0; x += 0.0625) {
        const double p = 0.5 * std::erfc(-x / std::sqrt(2.0));
        const double back = inverse_normal_cdf(p);
        CHECK(std::abs(back - x) <= 1e-9 * std::max(1.0, std::abs(x)));
    }
    CHECK(inverse_normal_cdf(1e-300) == doctest::Approx(-37.047096).epsilon(1e-6));
    for (double p : {1e-5, 0.1, 0.3, 0.7, 0.9}) {
        CHECK(inverse_normal_cdf(p) == doctest::Approx(-inverse_normal_cdf(1.0 - p)).epsilon(1e-9));
    }
}

TEST_CASE("fine increments are deterministic and live on the lattice") {
    const NoisePlan plan(42, 3, 2, 1e-3, 100);
    const auto a = plan.fine_increments(2, 57);
    const auto b = plan.fine_increments(2, 57);
    CHECK(a == b);
    REQUIRE(a.size() == 2);
    for (double v : a) {
        const double scaled = std::ldexp(v, NoisePlan::kLatticeBits);
        CHECK(scaled == std::round(scaled));
    }
    const NoisePlan other(43, 3, 2, 1e-3, 100);
    CHECK(other.fine_increments(2, 57) != a);
}

TEST_CASE("fine increment moments over a million draws") {
    const double h = 0.01;
    const std::size_t n = 1000000;
    const NoisePlan plan(7, 1, 1, h, n);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = plan.fine_increments(0, k)[0];
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum2 / static_cast<double>(n) - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(h / static_cast<double>(n)));
    CHECK(std::abs(var / h - 1.0) < 0.01);
}

TEST_CASE("distinct streams are uncorrelated") {
    const std::size_t n = 100000;
    const NoisePlan plan(11, 4, 2, 1.0, n);
    const auto corr = [&](std::size_t i, std::size_t ci, std::size_t j, std::size_t cj) {
        double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double x = plan.fine_increments(i, k)[ci];
            const double y = plan.fine_increments(j, k)[cj];
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        const double m = static_cast<double>(n);
        return (sxy / m - sx / m * sy / m) /
               std::sqrt((sxx / m - sx / m * sx / m) * (syy / m - sy / m * sy / m));
    };
    const double bound = 4.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(corr(0, 0, 1, 0)) < bound);
    CHECK(std::abs(corr(2, 1, 3, 1)) < bound);
    CHECK(std::abs(corr(1, 0, 1, 1)) < bound);
}

TEST_CASE("initial draws are disjoint from increments") {
    const NoisePlan plan(5, 2, 1, 1.0, 10);
    CHECK(initial_normal(5, 0, 0) != plan.fine_increments(0, 0)[0]);
    CHECK(initial_normal(5, 0, 0) == initial_normal(5, 0, 0));
    CHECK(initial_normal(5, 0, 0) != initial_normal(5, 1, 0));
    CHECK(initial_normal(5, 0, 0) != initial_normal(5, 0, 1));
}

TEST_CASE("coarsening sums fine increments exactly") {
    const NoisePlan plan(3, 2, 2, 0.25, 16);
    SUBCASE("factor 1 is the identity") {
        for (std::size_t k = 0; k < 16; ++k) CHECK(plan.coarsen(1, 1, k) == plan.fine_increments(1, k));
    }
    SUBCASE("factor 2 pairs neighbours") {
        for (std::size_t n = 0; n < 8; ++n) {
            const auto a = plan.fine_increments(0, 2 * n), b = plan.fine_increments(0, 2 * n + 1);
            const auto c = plan.coarsen(2, 0, n);
            for (std::size_t k = 0; k < 2; ++k) CHECK(c[k] == a[k] + b[k]);
        }
    }
    SUBCASE("nested coarsening equals direct coarsening bit for bit") {
        for (std::size_t n = 0; n < 2; ++n) {
            const auto direct = plan.coarsen(8, 1, n);
            std::vector<double> nested(2, 0.0);
            for (std::size_t m = 0; m < 2; ++m) {
                const auto mid = plan.coarsen(4, 1, 2 * n + m);
                std::vector<double> inner(2, 0.0);
                for (std::size_t q = 0; q < 2; ++q) {
                    const auto two = plan.coarsen(2, 1, 2 * (2 * n + m) + q);
                    for (std::size_t k = 0; k < 2; ++k) inner[k] += two[k];
                }
                CHECK(inner == mid);
                for (std::size_t k = 0; k < 2; ++k) nested[k] += mid[k];
            }
            CHECK(nested == direct);
        }
    }
}

TEST_CASE("step sizes must be multiples of the fine step") {
    const NoisePlan plan(1, 1, 1, 1e-4, 10000);
    CHECK(plan.factor_for(1e-4) == 1);
    CHECK(plan.factor_for(1e-3) == 10);
    CHECK(plan.factor_for(0.05) == 500);
    CHECK_THROWS_AS((void)plan.factor_for(3.5e-4), ConfigError);
    CHECK_THROWS_AS((void)plan.factor_for(3e-4), ConfigError);  // 10000 is not divisible by 3
    CHECK_THROWS_AS((void)plan.factor_for(0.5e-4), ConfigError);
}

TEST_CASE("index checks") {
    const NoisePlan plan(1, 2, 1, 0.1, 10);
    CHECK_THROWS_AS((void)plan.fine_increments(2, 0), ConfigError);
    CHECK_THROWS_AS((void)plan.fine_increments(0, 10), ConfigError);
    CHECK_THROWS_AS((void)plan.coarsen(2, 0, 5), ConfigError);
    CHECK_THROWS_AS((void)plan.feed(1, 3), ConfigError);
}

TEST_CASE("a feed for fewer particles serves the leading streams unchanged") {
    const NoisePlan plan(9, 6, 2, 0.01, 100);
    const auto small = plan.feed(5, 3);
    const auto large = plan.feed(5, 6);
    std::vector<double> a(3 * 2), b(6 * 2);
    for (std::size_t n = 0; n < 20; ++n) {
        small(n, a);
        large(n, b);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto direct = plan.coarsen(5, i, n);
            CHECK(a[2 * i] == direct[0]);
            CHECK(a[2 * i + 1] == direct[1]);
        }
    }
}
