#include "perp/parallel.hpp"

#include <cmath>

namespace perp {

double Moments::variance() const {
    if (count < 2) return 0.0;
    double n = static_cast<double>(count);
    double v = (sum_sq - sum * sum / n) / (n - 1.0);
    return v > 0.0 ? v : 0.0;
}

double Moments::std_error() const {
    return count ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
}

}  // namespace perp
