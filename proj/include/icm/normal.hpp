#pragma once

#include <cmath>

namespace icm {

/// Standard normal CDF via erfc.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

/// Standard normal density.
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

/// Standard normal quantile, p in (0, 1).
double normal_quantile(double p);

}  // namespace icm
