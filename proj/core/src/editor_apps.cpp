#include "setgan/editor_apps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "setgan/error.hpp"
#include "setgan/inference.hpp"
#include "setgan/pyramid.hpp"
#include "setgan/random.hpp"

namespace setgan {

namespace {

int finest_available(const TrainedBundle& bundle) {
  if (bundle.available_scales() == 0) {
    throw Error(ErrorCode::kScaleUnavailable, "bundle holds no scales");
  }
  return bundle.available_scales() - 1;
}

EditResult masked_injection(const TrainedBundle& bundle, const ImageGrid& composite,
                            const Mask& mask, int at_scale, std::uint64_t seed) {
  if (mask.dims() != composite.dims()) {
    throw Error(ErrorCode::kDimsMismatch, "mask dims differ from the image dims");
  }
  const int finest = finest_available(bundle);
  const Dims out_dims = bundle.manifest.schedule.dims[finest];

  ImageGrid base = resize(composite, out_dims);
  base.clamp_unit();
  const Mask region = dilate(resize_nearest(mask, out_dims), kMaskDilationRadius);

  EditResult result{base, at_scale, {}};
  if (region.count_editable() == 0) return result;

  const ImageGrid generated = inject(bundle, base, at_scale, finest, seed);
  for (int c = 0; c < ImageGrid::kChannels; ++c) {
    for (int y = 0; y < out_dims.height; ++y) {
      for (int x = 0; x < out_dims.width; ++x) {
        if (region.editable(y, x)) result.image.at(c, y, x) = generated.at(c, y, x);
      }
    }
  }
  return result;
}

}  // namespace

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::kSuperResolution: return "super_resolution";
    case EditKind::kPaint2Image: return "paint2image";
    case EditKind::kHarmonization: return "harmonization";
    case EditKind::kEditing: return "editing";
  }
  return "unknown";
}

EditKind parse_edit_kind(std::string_view text) {
  if (text == "super_resolution" || text == "sr") return EditKind::kSuperResolution;
  if (text == "paint2image" || text == "paint") return EditKind::kPaint2Image;
  if (text == "harmonization" || text == "harmonize") return EditKind::kHarmonization;
  if (text == "editing" || text == "edit") return EditKind::kEditing;
  throw Error(ErrorCode::kInvalidArgument, "unknown edit kind: " + std::string(text));
}

Mask dilate(const Mask& mask, int radius) {
  Mask out(mask.height(), mask.width());
  const int r2 = radius * radius;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.editable(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= mask.height()) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= mask.width() || dx * dx + dy * dy > r2) continue;
          out.at(yy, xx) = 255;
        }
      }
    }
  }
  return out;
}

EditResult super_resolution(const TrainedBundle& bundle, const ImageGrid& low_res, double s, int k,
                            std::uint64_t seed) {
  if (!(s > 1.0) || k < 1) throw Error(ErrorCode::kInvalidArgument, "need s > 1 and k >= 1");
  const double required = std::pow(s, 1.0 / k);
  if (std::abs(bundle.factor() - required) > 0.01 * required) {
    std::ostringstream message;
    message << "bundle scale factor " << bundle.factor() << " does not match required r = s^(1/k) = "
            << required << " (s=" << s << ", k=" << k << "); retrain with that factor";
    throw Error(ErrorCode::kInvalidArgument, message.str());
  }
  const int finest = finest_available(bundle);
  const ScaleModel& model = bundle.scale(finest);
  const Dims base = low_res.dims();

  ImageGrid current = low_res;
  current.clamp_unit();
  for (int j = 1; j <= k; ++j) {
    const double grow = std::pow(s, static_cast<double>(j) / k);
    const Dims dims{round_dim(base.height * grow), round_dim(base.width * grow)};
    const ImageGrid coarse = upscale(current, dims);
    const NoiseMap noise =
        make_noise_map(dims, derive_seed(seed, SeedStream::kEdit, j), model.noise_amplitude);
    current = generator_forward(model, noise, &coarse);
  }
  return {current, finest, {}};
}

EditResult paint2image(const TrainedBundle& bundle, const ImageGrid& clipart, int at_scale,
                       std::uint64_t seed) {
  const int finest = finest_available(bundle);
  std::vector<std::string> warnings;
  const int clamped = std::clamp(at_scale, 1, std::max(1, std::min(2, finest)));
  if (clamped != at_scale) {
    warnings.push_back("paint2image scale " + std::to_string(at_scale) + " outside {1, 2}; using " +
                       std::to_string(clamped));
  }
  if (finest < 1) throw Error(ErrorCode::kScaleUnavailable, "paint2image needs scales 0..1");
  return {inject(bundle, clipart, clamped, finest, seed), clamped, std::move(warnings)};
}

EditResult harmonize(const TrainedBundle& bundle, const ImageGrid& composite, const Mask& mask,
                     int at_scale, std::uint64_t seed) {
  const int finest = finest_available(bundle);
  const int lowest = std::max(1, finest - 2);
  if (at_scale < lowest || at_scale > finest) {
    throw Error(ErrorCode::kInvalidArgument, "harmonization scale " + std::to_string(at_scale) +
                                                 " outside [" + std::to_string(lowest) + ", " +
                                                 std::to_string(finest) + "]");
  }
  return masked_injection(bundle, composite, mask, at_scale, seed);
}

EditResult edit(const TrainedBundle& bundle, const ImageGrid& edited, const Mask& mask,
                int at_scale, std::uint64_t seed) {
  const int finest = finest_available(bundle);
  const int highest = std::min(4, finest);
  if (at_scale < 1 || at_scale > highest) {
    throw Error(ErrorCode::kInvalidArgument, "editing scale " + std::to_string(at_scale) +
                                                 " outside [1, " + std::to_string(highest) + "]");
  }
  EditResult result = masked_injection(bundle, edited, mask, at_scale, seed);
  if (at_scale < 2 || at_scale > 3) {
    result.warnings.push_back("editing usually works best at scales 2-3");
  }
  return result;
}

}  // namespace setgan
