#pragma once

// Counter-based random number generation (Philox4x32-10). A Stream is
// addressed by (seed, replication, purpose): the seed forms the cipher key
// and the stream coordinates sit in the counter, so every stream is an
// independent slice of one keyed permutation. Adding streams never perturbs
// existing ones, which keeps parallel replications bitwise reproducible and
// lets cross-law studies share common random numbers.

#include <array>
#include <cstdint>

namespace fluidfcfs::rng {

// One 128-bit block of the Philox4x32-10 keyed permutation.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kBump0 = 0x9E3779B9u;
    constexpr std::uint32_t kBump1 = 0xBB67AE85u;
    std::array<std::uint32_t, 4>& x = counter;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kBump0;
            key[1] += kBump1;
        }
        std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * x[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * x[2];
        x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return x;
}

class Stream {
public:
    Stream(std::uint64_t seed, std::uint32_t replication, std::uint32_t purpose)
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          purpose_(purpose),
          replication_(replication) {}

    // 64 uniform bits; blocks are consumed two words at a time, in order.
    std::uint64_t next_u64() {
        if (word_ == 4) {
            buffer_ = philox4x32({static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32),
                                  purpose_, replication_},
                                 key_);
            ++block_;
            word_ = 0;
        }
        std::uint64_t lo = buffer_[word_];
        std::uint64_t hi = buffer_[word_ + 1];
        word_ += 2;
        return lo | (hi << 32);
    }

    // Uniform double in [0, 1): the top 53 bits of a draw, scaled. Never 1.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t purpose_;
    std::uint32_t replication_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int word_ = 4;
};

} // namespace fluidfcfs::rng
