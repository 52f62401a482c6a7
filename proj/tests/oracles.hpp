#pragma once

// Reference implementations written straight from the formulas, sharing no
// code with the library. Slow on purpose.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

struct Params {
    double L0, A, B, C, alpha, beta, gamma;
};

inline std::vector<double> cosine(std::int64_t T, double peak, double end_ratio) {
    std::vector<double> v(static_cast<std::size_t>(T));
    for (std::int64_t t = 1; t <= T; ++t)
        v[static_cast<std::size_t>(t - 1)] =
            end_ratio * peak + (1.0 - end_ratio) * peak * 0.5 * (1.0 + std::cos(std::numbers::pi * double(t) / double(T)));
    return v;
}

/// eta(0) is the peak; eta(t) for t >= 1 reads post[t - 1].
inline double eta(const std::vector<double>& post, double peak, std::int64_t t) {
    return t == 0 ? peak : post[static_cast<std::size_t>(t - 1)];
}

/// Multi-power law by plain nested summation.
inline double mpl(const Params& p, const std::vector<double>& post, double peak, std::int64_t W, std::int64_t t) {
    long double s1 = 0.5L * peak * W;
    for (std::int64_t k = 1; k <= t; ++k) s1 += eta(post, peak, k);
    long double ld = 0.0L;
    for (std::int64_t k = 1; k <= t; ++k) {
        const double drop = eta(post, peak, k - 1) - eta(post, peak, k);
        if (drop == 0.0) continue;
        long double sk = 0.0L;
        for (std::int64_t j = k; j <= t; ++j) sk += eta(post, peak, j);
        const double x = std::pow(eta(post, peak, k), -p.gamma) * double(sk);
        ld += drop * (1.0 - std::pow(p.C * x + 1.0, -p.beta));
    }
    return p.L0 + p.A * std::pow(double(s1), -p.alpha) - p.B * double(ld);
}

/// Momentum sum S_2 by iterating the momentum recursion m_i = lambda m_{i-1} + drop_i.
inline double momentum_s2(double lambda, const std::vector<double>& post, double peak, std::int64_t t) {
    long double m = 0.0L, s2 = 0.0L;
    for (std::int64_t i = 1; i <= t; ++i) {
        m = lambda * m + (eta(post, peak, i - 1) - eta(post, peak, i));
        s2 += m;
    }
    return double(s2);
}

/// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Per-coordinate second-moment recursion of SGD on 0.5 lambda theta^2 with
/// gradient noise variance sigma, by explicit mean/variance bookkeeping.
inline double quad_loss(const std::vector<double>& lambdas, const std::vector<double>& sigmas,
                        const std::vector<double>& theta0, const std::vector<double>& lrs) {
    double loss = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        double mean = theta0[i], var = 0.0;
        for (double e : lrs) {
            mean *= 1.0 - e * lambdas[i];
            var = (1.0 - e * lambdas[i]) * (1.0 - e * lambdas[i]) * var + e * e * sigmas[i];
        }
        loss += 0.5 * lambdas[i] * (mean * mean + var);
    }
    return loss;
}

}  // namespace oracle
