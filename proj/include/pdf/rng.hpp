#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace pdf {

/*
 * Philox4x32-10 counter-based generator.
 *
 * The 64-bit key is the master seed; the upper half of the 128-bit counter
 * names an independent stream and the lower half walks through it. Two
 * engines with the same (seed, stream) produce identical sequences no matter
 * which thread or in which order they are created, so parallel replications
 * stay reproducible.
 *
 * Satisfies UniformRandomBitGenerator with 64-bit output.
 */
class Philox4x32 {
   public:
    using result_type = std::uint64_t;
    using block_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    Philox4x32() : Philox4x32(0, 0) {}
    Philox4x32(std::uint64_t seed, std::uint64_t stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()();

    /// Raw bijection, exposed for known-answer tests.
    static block_type encrypt(block_type counter, key_type key);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

   private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    block_type buffer_{};
    int used_ = 4;
};

/// Distinguishes the consumers of randomness inside one trial replication.
enum class StreamPurpose : std::uint32_t {
    Patient = 1,
    Mcmc = 2,
    PredictionError = 3,
    Misc = 4,
};

/// Stream id for (replication index, purpose, sub-index). sub must fit in 24 bits.
std::uint64_t stream_id(std::uint32_t replication, StreamPurpose purpose,
                        std::uint32_t sub);

/// Uniform double on [0, 1) with 53 random bits.
double uniform01(Philox4x32& rng);

/// Mixes an arbitrary 64-bit value into a well-spread seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace pdf
