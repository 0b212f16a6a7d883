#pragma once

#include <cstdint>
#include <optional>

#include "setgan/bundle.hpp"
#include "setgan/image.hpp"

namespace setgan {

struct Injection {
  ImageGrid image;
  int at_scale = 1;
};

struct GenerationRequest {
  int up_to_scale = 0;
  std::optional<Dims> coarsest_dims;  // defaults to the bundle's coarsest level
  std::uint64_t seed = 0;
  std::optional<Injection> inject;
};

// Dims of scale i when generation starts from `coarsest`: round(coarsest * r^i).
Dims generation_dims(Dims coarsest, double factor, int scale_index);

// Noise for scale i of a request seeded with `seed`.
NoiseMap request_noise(const TrainedBundle& bundle, std::uint64_t seed, int scale_index, Dims dims);

// Coarse-to-fine sampling through G_0..G_{up_to}. Throws kScaleUnavailable
// when the bundle does not hold the requested scales.
ImageGrid generate(const TrainedBundle& bundle, const GenerationRequest& request);

// Resamples `image` to the bundle dims of `at_scale` and uses it in place of
// the upscaled coarser output there, then refines up to `up_to_scale`.
// Noise is added at the injection scale as well.
ImageGrid inject(const TrainedBundle& bundle, const ImageGrid& image, int at_scale,
                 int up_to_scale, std::uint64_t seed);

}  // namespace setgan
