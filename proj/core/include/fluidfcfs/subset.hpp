#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace fluidfcfs {

// Subsets of servers or customer types as 64-bit masks. Index k of the
// entity order corresponds to bit k. System sizes are capped at 63 per
// side so that a mask always fits with a sign-safe spare bit.
using Mask = std::uint64_t;

inline constexpr int kMaxEntities = 63;

constexpr Mask bit(int k) { return Mask{1} << k; }
constexpr Mask full_mask(int n) { return n == 0 ? 0 : (Mask{1} << n) - 1; }
constexpr bool contains(Mask m, int k) { return (m >> k) & 1; }
constexpr int popcount(Mask m) { return std::popcount(m); }

// Visits each set bit in ascending index order.
template <typename F>
void for_each_bit(Mask m, F&& f) {
    while (m != 0) {
        int k = std::countr_zero(m);
        f(k);
        m &= m - 1;
    }
}

inline std::vector<int> mask_to_indices(Mask m) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(popcount(m)));
    for_each_bit(m, [&](int k) { out.push_back(k); });
    return out;
}

// Enumerates the nonempty proper submasks of `m` (relative to `m` itself).
// The standard submask-walk visits each submask of m exactly once.
template <typename F>
void for_each_proper_submask(Mask m, F&& f) {
    for (Mask sub = (m - 1) & m; sub != 0; sub = (sub - 1) & m) {
        f(sub);
    }
}

} // namespace fluidfcfs
