#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace perp {

using Stream = std::mt19937_64;

constexpr std::uint64_t stream_tag(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Independent stream for (seed, tag, index); the same triple always yields the same stream.
Stream make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);

}  // namespace perp
