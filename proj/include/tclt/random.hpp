#ifndef TCLT_RANDOM_HPP
#define TCLT_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace tclt
{

using engine_type = std::mt19937_64;

// 64-bit FNV-1a over the little-endian bytes of each field, in order.
// This is the seed-derivation contract shared by every component; keep it bit-exact.
inline constexpr std::uint64_t fnv1a_offset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t fnv1a_prime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a_bytes(std::uint64_t h, std::uint64_t field) noexcept
{
    for (int b = 0; b < 8; ++b) {
        h ^= (field >> (8 * b)) & 0xffU;
        h *= fnv1a_prime;
    }
    return h;
}

constexpr std::uint64_t hash64(std::initializer_list<std::uint64_t> fields) noexcept
{
    std::uint64_t h = fnv1a_offset;
    for (auto f : fields) {
        h = fnv1a_bytes(h, f);
    }
    return h;
}

inline std::uint64_t hash64(std::span<const std::uint64_t> fields) noexcept
{
    std::uint64_t h = fnv1a_offset;
    for (auto f : fields) {
        h = fnv1a_bytes(h, f);
    }
    return h;
}

/// Stream seed for item `index` of a computation seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
    return hash64({seed, index});
}

inline engine_type make_engine(std::uint64_t seed) { return engine_type{seed}; }

} // namespace tclt

#endif
