#include "mpl/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace mpl {

namespace {

constexpr int kMaxIter = 10000;
constexpr double kEps = 1e-16;

// Both helpers return the value divided by x^s e^-x.
double series_scaled(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
        term *= x / (s + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) return sum;
    }
    throw std::runtime_error(fmt::format("incomplete gamma series failed to converge (s={}, x={})", s, x));
}

double upper_cf_scaled(double s, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) return h;
    }
    throw std::runtime_error(
        fmt::format("incomplete gamma continued fraction failed to converge (s={}, x={})", s, x));
}

void check_args(double s, double x) {
    if (!(s > 0.0)) throw std::domain_error(fmt::format("incomplete gamma needs s > 0, got {}", s));
    if (!(x >= 0.0)) throw std::domain_error(fmt::format("incomplete gamma needs x >= 0, got {}", x));
}

}  // namespace

double lower_incomplete_gamma(double s, double x) {
    check_args(s, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return std::tgamma(s);
    const double log_prefix = s * std::log(x) - x;
    if (x < s + 1.0) return std::exp(log_prefix) * series_scaled(s, x);
    return std::tgamma(s) - std::exp(log_prefix) * upper_cf_scaled(s, x);
}

double regularized_lower_gamma(double s, double x) {
    check_args(s, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double log_prefix = s * std::log(x) - x - std::lgamma(s);
    if (x < s + 1.0) return std::exp(log_prefix) * series_scaled(s, x);
    return 1.0 - std::exp(log_prefix) * upper_cf_scaled(s, x);
}

}  // namespace mpl
