#pragma once

namespace mpl {

/// Lower incomplete gamma gamma(s, x) = integral_0^x t^(s-1) e^(-t) dt.
/// Series for x < s + 1, Lentz continued fraction for the complement otherwise.
/// Throws std::domain_error for s <= 0 or x < 0.
double lower_incomplete_gamma(double s, double x);

/// Regularized form P(s, x) = gamma(s, x) / Gamma(s).
double regularized_lower_gamma(double s, double x);

}  // namespace mpl
