#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace semidqg {

// FNV-1a 64-bit. Used for config hashes and checkpoint blob checksums;
// not cryptographic.
inline std::uint64_t fnv1a64(std::span<const unsigned char> data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : data) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

std::string hex64(std::uint64_t v);

}  // namespace semidqg
