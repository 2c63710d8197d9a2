#pragma once

namespace perp::special {

double digamma(double x);
double trigamma(double x);
// Standard normal distribution function and its complement.
double normal_cdf(double z);
double normal_sf(double z);
// Regularized upper incomplete Gamma Q(a, x).
double gamma_q(double a, double x);
double log_binomial(unsigned n, unsigned k);

}  // namespace perp::special
