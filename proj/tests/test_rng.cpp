#include <doctest.h>

#include <fluidfcfs/rng.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

using fluidfcfs::rng::philox4x32;
using fluidfcfs::rng::Stream;

TEST_CASE("block function reproduces the published reference vectors") {
    // Reference outputs cross-checked against two independent
    // implementations of the same generator.
    std::array<std::uint32_t, 4> zero =
        philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(zero == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du,
                                               0xbc57ac4cu, 0x9b00dbd8u});

    std::array<std::uint32_t, 4> ones = philox4x32(
        {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
        {0xffffffffu, 0xffffffffu});
    CHECK(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu,
                                               0xa20bc7c6u, 0x6d5451fdu});

    std::array<std::uint32_t, 4> pi = philox4x32(
        {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
        {0xa4093822u, 0x299f31d0u});
    CHECK(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu,
                                             0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams consume blocks two words at a time in counter order") {
    std::uint64_t seed = 0x0123456789abcdefull;
    Stream s(seed, 7, 3);

    std::array<std::uint32_t, 4> block0 = philox4x32(
        {0u, 0u, 3u, 7u},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    std::array<std::uint32_t, 4> block1 = philox4x32(
        {1u, 0u, 3u, 7u},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});

    CHECK(s.next_u64() == (static_cast<std::uint64_t>(block0[1]) << 32 | block0[0]));
    CHECK(s.next_u64() == (static_cast<std::uint64_t>(block0[3]) << 32 | block0[2]));
    CHECK(s.next_u64() == (static_cast<std::uint64_t>(block1[1]) << 32 | block1[0]));
    CHECK(s.next_u64() == (static_cast<std::uint64_t>(block1[3]) << 32 | block1[2]));
}

TEST_CASE("identical stream coordinates replay the identical sequence") {
    Stream a(42, 3, 1);
    Stream b(42, 3, 1);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct replication or purpose coordinates give distinct draws") {
    Stream base(42, 0, 0);
    Stream other_rep(42, 1, 0);
    Stream other_purpose(42, 0, 1);
    Stream other_seed(43, 0, 0);
    // The first draws differing is the cheap necessary condition; full
    // independence rides on the block cipher.
    std::uint64_t d = base.next_u64();
    CHECK(d != other_rep.next_u64());
    CHECK(d != other_purpose.next_u64());
    CHECK(d != other_seed.next_u64());
}

TEST_CASE("uniform draws live in the half-open unit interval with mean one half") {
    Stream s(2024, 0, 0);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = s.next_uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    double mean = sum / n;
    // Standard error of the mean is 1/sqrt(12 n) ~ 9.1e-4; allow five.
    CHECK(std::abs(mean - 0.5) < 5.0 / std::sqrt(12.0 * n));
}
