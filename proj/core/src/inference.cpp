#include "setgan/inference.hpp"

#include <cmath>
#include <string>

#include "setgan/error.hpp"
#include "setgan/pyramid.hpp"
#include "setgan/random.hpp"

namespace setgan {

namespace {

void require_scales(const TrainedBundle& bundle, int up_to_scale) {
  if (up_to_scale < 0) throw Error(ErrorCode::kInvalidArgument, "up_to_scale must be >= 0");
  if (up_to_scale >= bundle.available_scales()) {
    throw Error(ErrorCode::kScaleUnavailable,
                "scale unavailable: requested up to " + std::to_string(up_to_scale) +
                    ", bundle holds " + std::to_string(bundle.available_scales()));
  }
}

}  // namespace

Dims generation_dims(Dims coarsest, double factor, int scale_index) {
  const double grow = std::pow(factor, scale_index);
  return {round_dim(coarsest.height * grow), round_dim(coarsest.width * grow)};
}

NoiseMap request_noise(const TrainedBundle& bundle, std::uint64_t seed, int scale_index, Dims dims) {
  return make_noise_map(dims, derive_seed(seed, SeedStream::kGenerate, scale_index),
                        bundle.scale(scale_index).noise_amplitude);
}

ImageGrid generate(const TrainedBundle& bundle, const GenerationRequest& request) {
  if (request.inject) {
    return inject(bundle, request.inject->image, request.inject->at_scale, request.up_to_scale,
                  request.seed);
  }
  require_scales(bundle, request.up_to_scale);
  const Dims coarsest = request.coarsest_dims.value_or(bundle.manifest.schedule.coarsest());
  if (coarsest.height < 1 || coarsest.width < 1) {
    throw Error(ErrorCode::kInvalidArgument, "coarsest dims must be positive");
  }

  ImageGrid current = generator_forward(bundle.scale(0),
                                        request_noise(bundle, request.seed, 0, coarsest), nullptr);
  for (int i = 1; i <= request.up_to_scale; ++i) {
    const Dims dims = generation_dims(coarsest, bundle.factor(), i);
    const ImageGrid coarse = upscale(current, dims);
    current = generator_forward(bundle.scale(i), request_noise(bundle, request.seed, i, dims), &coarse);
  }
  return current;
}

ImageGrid inject(const TrainedBundle& bundle, const ImageGrid& image, int at_scale,
                 int up_to_scale, std::uint64_t seed) {
  if (at_scale < 1 || at_scale > up_to_scale) {
    throw Error(ErrorCode::kInvalidArgument,
                "injection scale " + std::to_string(at_scale) + " outside [1, " +
                    std::to_string(up_to_scale) + "]");
  }
  require_scales(bundle, up_to_scale);
  const auto& dims = bundle.manifest.schedule.dims;

  ImageGrid current = resize(image, dims[at_scale]);
  current.clamp_unit();
  current = generator_forward(bundle.scale(at_scale),
                              request_noise(bundle, seed, at_scale, dims[at_scale]), &current);
  for (int i = at_scale + 1; i <= up_to_scale; ++i) {
    const ImageGrid coarse = upscale(current, dims[i]);
    current = generator_forward(bundle.scale(i), request_noise(bundle, seed, i, dims[i]), &coarse);
  }
  return current;
}

}  // namespace setgan
