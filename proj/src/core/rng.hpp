#pragma once

#include <cstdint>
#include <random>

namespace repsample {

// SplitMix64 finalizer; used to derive independent seed streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
    return derive_seed(derive_seed(seed, stream), sub);
}

// Stream identifiers so that different consumers of one user seed never share draws.
namespace stream {
inline constexpr std::uint64_t Init = 1;
inline constexpr std::uint64_t TrainStep = 2;
inline constexpr std::uint64_t Condition = 3;
inline constexpr std::uint64_t Draw = 4;
inline constexpr std::uint64_t Emitter = 5;
inline constexpr std::uint64_t Trial = 6;
inline constexpr std::uint64_t PdfTrain = 7;
inline constexpr std::uint64_t Eval = 8;
} // namespace stream

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return normal_(engine_); }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace repsample
