#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace setgan {

// Stream identifiers used when deriving independent seeds from a base seed.
enum class SeedStream : std::uint64_t {
  kInit = 1,
  kTrainNoise = 2,
  kReconstruction = 3,
  kPenaltyMix = 4,
  kGenerate = 5,
  kEdit = 6,
};

// SplitMix64 finaliser over (base, stream, index); stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, SeedStream stream, std::uint64_t index);

// Standard normal samples via Box-Muller over mt19937_64. Unlike
// std::normal_distribution the sequence is fixed by this implementation,
// so it is identical across standard libraries.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next();
  void fill(std::span<float> out, double stddev);
  // Uniform in [0, 1).
  double uniform();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace setgan
