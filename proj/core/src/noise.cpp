#include "setgan/noise.hpp"

#include "setgan/error.hpp"
#include "setgan/random.hpp"

namespace setgan {

NoiseMap make_noise_map(Dims dims, std::uint64_t seed, double amplitude) {
  if (amplitude < 0.0) throw Error(ErrorCode::kInvalidArgument, "noise amplitude must be >= 0");
  NoiseMap noise{dims, seed, amplitude, ImageGrid(dims)};
  if (amplitude > 0.0) {
    GaussianStream stream(seed);
    stream.fill(noise.values.values(), amplitude);
  }
  return noise;
}

NoiseMap zero_noise(Dims dims) { return NoiseMap{dims, 0, 0.0, ImageGrid(dims)}; }

}  // namespace setgan
