#include "pdf/rng.hpp"

namespace pdf {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {}

Philox4x32::block_type Philox4x32::encrypt(block_type ctr, key_type key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

void Philox4x32::refill() {
    block_type ctr{static_cast<std::uint32_t>(block_),
                   static_cast<std::uint32_t>(block_ >> 32),
                   static_cast<std::uint32_t>(stream_),
                   static_cast<std::uint32_t>(stream_ >> 32)};
    key_type key{static_cast<std::uint32_t>(seed_),
                 static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = encrypt(ctr, key);
    ++block_;
    used_ = 0;
}

Philox4x32::result_type Philox4x32::operator()() {
    if (used_ >= 4) refill();
    std::uint64_t lo = buffer_[used_];
    std::uint64_t hi = buffer_[used_ + 1];
    used_ += 2;
    return (hi << 32) | lo;
}

std::uint64_t stream_id(std::uint32_t replication, StreamPurpose purpose,
                        std::uint32_t sub) {
    std::uint64_t tag = (static_cast<std::uint64_t>(purpose) << 24) |
                        (sub & 0xFFFFFFu);
    return (static_cast<std::uint64_t>(replication) << 32) | tag;
}

double uniform01(Philox4x32& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace pdf
