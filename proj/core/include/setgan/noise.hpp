#pragma once

#include <cstdint>

#include "setgan/image.hpp"

namespace setgan {

// Spatial Gaussian noise field, fully reproducible from (dims, seed, amplitude).
struct NoiseMap {
  Dims dims;
  std::uint64_t seed = 0;
  double amplitude = 0.0;
  ImageGrid values;
};

NoiseMap make_noise_map(Dims dims, std::uint64_t seed, double amplitude);
NoiseMap zero_noise(Dims dims);

}  // namespace setgan
