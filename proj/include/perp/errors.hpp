#pragma once

#include <stdexcept>
#include <string>

namespace perp {

// Numeric values are mirrored by perp_status in perp.h.
enum class Status : int {
    ok = 0,
    invalid_argument = 1,
    parse = 2,
    domain = 3,
    no_root = 4,
    boundary = 5,
    truncation = 6,
    unsupported = 7,
    numerical = 8,
    infeasible = 9,
    guard = 10,
    io = 11,
    internal = 12,
};

const char* status_name(Status s) noexcept;

// Validation-class statuses map to CLI exit code 2, the rest to 3.
bool is_validation(Status s) noexcept;

class Error : public std::runtime_error {
public:
    Error(Status status, const std::string& what) : std::runtime_error(what), status_(status) {}
    Status status() const noexcept { return status_; }

private:
    Status status_;
};

class TruncationError : public Error {
public:
    TruncationError(const std::string& what, double partial_sum, double bound)
        : Error(Status::truncation, what), partial_sum_(partial_sum), bound_(bound) {}
    double partial_sum() const noexcept { return partial_sum_; }
    double bound() const noexcept { return bound_; }

private:
    double partial_sum_;
    double bound_;
};

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, double x_min, double x_max)
        : Error(Status::infeasible, what), x_min_(x_min), x_max_(x_max) {}
    // Feasible range of log x.
    double logx_min() const noexcept { return x_min_; }
    double logx_max() const noexcept { return x_max_; }

private:
    double x_min_;
    double x_max_;
};

}  // namespace perp
