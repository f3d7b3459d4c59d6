#include "stopsafe/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

namespace stopsafe::stats {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double chi2_sf(double x, int df) {
    if (x <= 0.0) return 1.0;
    const boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::cdf(boost::math::complement(dist, x));
}

double wald_p(double estimate, double se) {
    if (!(se > 0.0)) return std::nan("");
    return 2.0 * normal_cdf(-std::abs(estimate / se));
}

double ks_one_sided_critical(std::size_t n, double alpha) {
    return std::sqrt(-std::log(alpha) / (2.0 * static_cast<double>(n)));
}

}  // namespace stopsafe::stats
