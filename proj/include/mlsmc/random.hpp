#pragma once

// Counter-based random streams. Every draw is addressed by (seed, stream, a, b)
// so results never depend on evaluation order or on the number of workers.

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace mlsmc {

/// Philox4x32-10 (Salmon et al., Random123). Key: 64 bits, counter: 128 bits.
/// The low counter word is the block index; the upper three select the stream.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    Philox4x32(std::uint64_t key, std::uint32_t s1, std::uint32_t s2, std::uint32_t s3) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          counter_{0, s1, s2, s3} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (used_ == 4) {
            buffer_ = encrypt(counter_, key_);
            ++counter_[0];
            used_ = 0;
        }
        return buffer_[used_++];
    }

    static constexpr Block encrypt(Block ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    Key key_;
    Block counter_;
    Block buffer_{};
    int used_ = 4;
};

/// Stream domains. Each consumer of randomness owns one.
enum class Stream : std::uint32_t {
    applied_current = 1,
    leak_conductance,
    gating,
    excitatory,
    inhibitory,
    observation,
    filter_init,
    particle,
    resample,
    mcmc,
};

/// SplitMix64 finalizer applied to (master, index); used to give trials,
/// trajectories and MCMC iterations disjoint seeds.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Normal and uniform draws from the stream addressed by (seed, domain, a, b),
/// e.g. a = time step and b = particle index.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, Stream domain, std::uint32_t a = 0, std::uint32_t b = 0) noexcept
        : engine_(seed, static_cast<std::uint32_t>(domain), a, b) {}

    double normal() { return normal_(engine_); }
    double uniform() { return std::generate_canonical<double, 53>(engine_); }

private:
    Philox4x32 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace mlsmc
