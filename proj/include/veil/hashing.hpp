#ifndef VEIL_HASHING_HPP
#define VEIL_HASHING_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace veil {

// FNV-1a 64-bit. Stable across platforms, used for content hashes and
// per-image seed derivation (std::hash is not portable).
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string to_hex(std::uint64_t v);

// Deterministic per-image seed from the run seed and the input content hash.
inline std::uint64_t derive_image_seed(std::uint64_t run_seed, std::uint64_t content_hash) {
    return splitmix64(run_seed ^ splitmix64(content_hash));
}

}  // namespace veil

#endif  // VEIL_HASHING_HPP
