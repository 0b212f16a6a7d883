#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setgan/bundle.hpp"
#include "setgan/image.hpp"

namespace setgan {

inline constexpr int kMaskDilationRadius = 8;

enum class EditKind { kSuperResolution, kPaint2Image, kHarmonization, kEditing };
std::string_view to_string(EditKind kind);
EditKind parse_edit_kind(std::string_view text);

// Result plus any non-fatal adjustments (e.g. a clamped injection scale).
struct EditResult {
  ImageGrid image;
  int at_scale = 0;
  std::vector<std::string> warnings;
};

// Disc dilation with the given radius in pixels.
Mask dilate(const Mask& mask, int radius);

// k passes of {bilinear upscale toward round(dims * s^(j/k)), finest
// generator with fresh noise}. Requires the bundle factor to equal s^(1/k)
// within 1%.
EditResult super_resolution(const TrainedBundle& bundle, const ImageGrid& low_res, double s, int k,
                            std::uint64_t seed);

// Injects clip-art at a coarse scale (1 or 2; clamped with a warning).
EditResult paint2image(const TrainedBundle& bundle, const ImageGrid& clipart, int at_scale,
                       std::uint64_t seed);

// Injects the composite at a fine scale (S-3..S-1) and keeps composite
// pixels outside the dilated mask.
EditResult harmonize(const TrainedBundle& bundle, const ImageGrid& composite, const Mask& mask,
                     int at_scale, std::uint64_t seed);

// Same masking contract at coarse-mid scales (1..4, best 2-3).
EditResult edit(const TrainedBundle& bundle, const ImageGrid& edited, const Mask& mask,
                int at_scale, std::uint64_t seed);

}  // namespace setgan
