#include "perp/special.hpp"

#include <cmath>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "perp/errors.hpp"

namespace perp::special {

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double gamma_q(double a, double x) {
    if (!(a > 0.0)) throw Error(Status::domain, "gamma_q: shape must be positive");
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(a, x);
}

double log_binomial(unsigned n, unsigned k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace perp::special
