#include "mfsim/interaction.hpp"

#include "mfsim/errors.hpp"
#include "mfsim/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfsim {

bool ParticleState::all_finite() const noexcept {
    return std::all_of(positions.begin(), positions.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void check_finite(std::size_t i, std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw DivergenceError("non-finite drift at particle " + std::to_string(i), i);
        }
    }
}

}  // namespace

void convolution_drift(std::size_t i, const CloudView& cloud, const ModelSpec& m, std::span<double> out) {
    const std::size_t d = cloud.dim();
    const std::size_t n = cloud.size();
    double z[8];
    double fz[8];
    std::vector<double> zbuf, fbuf;
    std::span<double> zs(z, d), fs(fz, d);
    if (d > 8) {
        zbuf.resize(d);
        fbuf.resize(d);
        zs = zbuf;
        fs = fbuf;
    }
    std::fill(out.begin(), out.end(), 0.0);
    const auto xi = cloud.row(i);
    for (std::size_t j = 0; j < n; ++j) {
        const auto xj = cloud.row(j);
        for (std::size_t k = 0; k < d; ++k) {
            zs[k] = xi[k] - xj[k];
        }
        m.f(zs, fs);
        for (std::size_t k = 0; k < d; ++k) {
            out[k] += fs[k];
        }
    }
    for (std::size_t k = 0; k < d; ++k) {
        out[k] /= static_cast<double>(n);
    }
}

void drift_v(std::size_t i, const CloudView& cloud, const ModelSpec& m, std::span<double> out) {
    const std::size_t d = cloud.dim();
    convolution_drift(i, cloud, m, out);
    double ub[8];
    std::vector<double> big;
    std::span<double> us(ub, d);
    if (d > 8) {
        big.resize(d);
        us = big;
    }
    m.u(cloud.row(i), cloud, us);
    for (std::size_t k = 0; k < d; ++k) {
        out[k] += us[k];
    }
    check_finite(i, out);
}

std::vector<double> drift_v(std::size_t i, const CloudView& cloud, const ModelSpec& m) {
    std::vector<double> out(cloud.dim());
    drift_v(i, cloud, m, out);
    return out;
}

void drift_V(const CloudView& cloud, const ModelSpec& m, std::span<double> out, SumMode mode,
             std::size_t threads) {
    const std::size_t d = cloud.dim();
    const std::size_t n = cloud.size();
    if (mode == SumMode::ordered) {
        if (threads <= 1) {
            for (std::size_t i = 0; i < n; ++i) {
                drift_v(i, cloud, m, out.subspan(i * d, d));
            }
        } else {
            parallel_for(n, threads, [&](std::size_t i) { drift_v(i, cloud, m, out.subspan(i * d, d)); });
        }
        return;
    }

    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> z(d), fz(d), us(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = cloud.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto xj = cloud.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                z[k] = xi[k] - xj[k];
            }
            m.f(z, fz);
            for (std::size_t k = 0; k < d; ++k) {
                out[i * d + k] += fz[k];
                out[j * d + k] -= fz[k];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        m.u(cloud.row(i), cloud, us);
        auto row = out.subspan(i * d, d);
        for (std::size_t k = 0; k < d; ++k) {
            row[k] = row[k] / static_cast<double>(n) + us[k];
        }
        check_finite(i, row);
    }
}

std::vector<double> drift_V(const CloudView& cloud, const ModelSpec& m, SumMode mode, std::size_t threads) {
    std::vector<double> out(cloud.size() * cloud.dim());
    drift_V(cloud, m, out, mode, threads);
    return out;
}

}  // namespace mfsim
