#include "perp/rng.hpp"

namespace perp {

Stream make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(tag), hi(tag), lo(index), hi(index)};
    return Stream(seq);
}

}  // namespace perp
