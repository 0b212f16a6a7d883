#pragma once

#include <vector>

#include "setgan/image.hpp"

namespace setgan {

struct ScaleSchedule {
  int scale_count = 0;
  double factor = 0.0;     // actual per-scale ratio r after endpoint fitting
  std::vector<Dims> dims;  // coarsest first
  int min_dim = 0;
  int max_dim = 0;

  Dims finest() const { return dims.back(); }
  Dims coarsest() const { return dims.front(); }

  friend bool operator==(const ScaleSchedule&, const ScaleSchedule&) = default;
};

struct ImagePyramid {
  ScaleSchedule schedule;
  std::vector<ImageGrid> levels;

  const ImageGrid& source() const { return levels.back(); }
};

// Round-half-up, clamped to at least one pixel.
int round_dim(double value);

// Dims of an image whose larger side is scaled to `max_dim`, aspect preserved.
Dims fit_to_max_dim(Dims input, int max_dim);

// Plans the pyramid: the number of scales is chosen so the ratio between
// consecutive scales is near `r_target`, then the ratio is refitted so the
// geometric chain lands exactly on the finest dims and on `min_dim` for the
// smaller side of the coarsest scale.
ScaleSchedule compute_scale_schedule(Dims input, int max_dim, int min_dim, double r_target);

// Levels are each downsampled from the full-resolution source.
ImagePyramid build_pyramid(const ImageGrid& image, const ScaleSchedule& schedule);

// Bilinear interpolation (pixel-centre aligned, edge clamped) to exactly
// `target`; refuses to shrink either axis.
ImageGrid upscale(const ImageGrid& image, Dims target);

// General resampler: antialiased bicubic (Keys, a = -0.5) whose support is
// widened by the reduction factor when shrinking. Identity when dims agree.
ImageGrid resize(const ImageGrid& image, Dims target);

// Nearest-neighbour mask resampling.
Mask resize_nearest(const Mask& mask, Dims target);

}  // namespace setgan
