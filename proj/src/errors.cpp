#include "perp/errors.hpp"

namespace perp {

const char* status_name(Status s) noexcept {
    switch (s) {
        case Status::ok: return "ok";
        case Status::invalid_argument: return "invalid_argument";
        case Status::parse: return "parse";
        case Status::domain: return "domain";
        case Status::no_root: return "no_root";
        case Status::boundary: return "boundary";
        case Status::truncation: return "truncation";
        case Status::unsupported: return "unsupported";
        case Status::numerical: return "numerical";
        case Status::infeasible: return "infeasible";
        case Status::guard: return "guard";
        case Status::io: return "io";
        case Status::internal: return "internal";
    }
    return "unknown";
}

bool is_validation(Status s) noexcept {
    switch (s) {
        case Status::invalid_argument:
        case Status::parse:
        case Status::domain:
        case Status::unsupported:
        case Status::infeasible:
        case Status::io:
            return true;
        default:
            return false;
    }
}

}  // namespace perp
