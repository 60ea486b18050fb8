#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ssgan::rng {

// SplitMix64 finalizer. All randomness in the engine is derived by mixing a
// seed with structural coordinates (epoch, batch index, element index, ...)
// so that any draw can be replayed without carrying generator state around.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (0x9e3779b97f4a7c15ull + splitmix64(b)));
}

template <typename... Rest>
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix(mix(a, b), static_cast<std::uint64_t>(rest)...);
}

// Uniform double in [0, 1) from a mixed word (53 mantissa bits).
constexpr double unit_double(std::uint64_t x) {
    return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

// Named sub-stream tags. Keeping them in one place guarantees that e.g. the
// trainer and the loss functions derive the same dropout seed from a shared
// per-iteration seed.
namespace stream {
inline constexpr std::uint64_t kAugment = 0xA001;
inline constexpr std::uint64_t kDropout = 0xA002;
inline constexpr std::uint64_t kPermutation = 0xA003;
inline constexpr std::uint64_t kLambda = 0xA004;
inline constexpr std::uint64_t kXi = 0xA005;
inline constexpr std::uint64_t kXiPrime = 0xA006;
inline constexpr std::uint64_t kLabeledShuffle = 0xA007;
inline constexpr std::uint64_t kUnlabeledShuffle = 0xA008;
inline constexpr std::uint64_t kLatent = 0xA009;
inline constexpr std::uint64_t kInit = 0xA00A;
inline constexpr std::uint64_t kEpoch = 0xA00B;
inline constexpr std::uint64_t kSample = 0xA00C;
inline constexpr std::uint64_t kEval = 0xA00D;
}  // namespace stream

// Stateful generator for places where a sequence of draws is natural
// (shuffles, parameter init). Seeded from a mixed word.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    double gamma(double alpha) {
        return std::gamma_distribution<double>(alpha, 1.0)(gen_);
    }
    // Inclusive bounds.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(
                uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    std::mt19937_64& raw() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace ssgan::rng
