#pragma once

#include <cstdint>

namespace stopsafe::stats {

inline constexpr double kLogisticResidualVariance = 3.2898681336964528;  // pi^2 / 3
inline constexpr double kZ975 = 1.959963984540054;

// Standard normal CDF.
double normal_cdf(double x);

// Upper tail of the chi-squared distribution with df >= 1.
double chi2_sf(double x, int df);

// Two-sided Wald p-value for estimate/se.
double wald_p(double estimate, double se);

// One-sided Kolmogorov-Smirnov critical value for D+ = sup(F_hat - F) at
// significance alpha: sqrt(-ln(alpha) / (2n)).
double ks_one_sided_critical(std::size_t n, double alpha);

}  // namespace stopsafe::stats
