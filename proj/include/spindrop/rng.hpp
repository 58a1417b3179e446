#pragma once

#include <cmath>
#include <cstdint>

namespace spindrop {

// Counter-based deterministic RNG built on the SplitMix64 finalizer.
//
// Streams are derived by forking: fork(tag) produces an independent
// substream whose output depends only on (seed, path of tags), never on how
// many numbers other streams consumed. The reference inference engine and
// the crossbar simulator both derive their dropout draws from the same
// (seed, run, site, channel) path, which is what makes their mask sequences
// identical without any shared mutable state.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t seed) : state_(mix(0x9e3779b97f4a7c15ull, seed)) {}

    // Derive an independent substream. Pure: does not advance this stream.
    [[nodiscard]] StreamRng fork(std::uint64_t tag) const {
        return StreamRng(FromState{}, mix(state_, tag));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return finalize(state_);
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be >= 1.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (pairs cached).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        // avoid log(0)
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t stream_id() const { return state_; }

private:
    struct FromState {};
    StreamRng(FromState, std::uint64_t s) : state_(s) {}

    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        return finalize(a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull));
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Fixed fork tags so every consumer derives from a documented path.
namespace rng_tag {
inline constexpr std::uint64_t kWeightInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kTrainMask = 3;
inline constexpr std::uint64_t kMcRun = 4;
inline constexpr std::uint64_t kData = 5;
inline constexpr std::uint64_t kOod = 6;
}  // namespace rng_tag

}  // namespace spindrop
