#include "setgan/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "setgan/error.hpp"

namespace setgan {

namespace {

// Keys cubic convolution kernel, a = -0.5.
double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// Per-output-pixel taps along one axis, normalized to sum to one.
std::vector<Taps> resample_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = 2.0 * filter_scale;
  std::vector<Taps> taps(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
    const int hi = std::min(in_size, static_cast<int>(std::ceil(center + support)));
    Taps& t = taps[i];
    t.first = lo;
    double total = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double w = cubic_kernel((j + 0.5 - center) / filter_scale);
      t.weights.push_back(w);
      total += w;
    }
    for (double& w : t.weights) w /= total;
  }
  return taps;
}

ImageGrid resample_rows(const ImageGrid& image, int out_height) {
  const auto taps = resample_taps(image.height(), out_height);
  ImageGrid out(out_height, image.width());
  for (int c = 0; c < ImageGrid::kChannels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const Taps& t = taps[y];
      for (int x = 0; x < image.width(); ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          acc += t.weights[k] * image.at(c, t.first + static_cast<int>(k), x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageGrid resample_cols(const ImageGrid& image, int out_width) {
  const auto taps = resample_taps(image.width(), out_width);
  ImageGrid out(image.height(), out_width);
  for (int c = 0; c < ImageGrid::kChannels; ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < out_width; ++x) {
        const Taps& t = taps[x];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          acc += t.weights[k] * image.at(c, y, t.first + static_cast<int>(k));
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

std::vector<Dims> chain_dims(Dims finest, double factor, int count) {
  std::vector<Dims> dims(count);
  for (int i = 0; i < count; ++i) {
    const double shrink = std::pow(factor, -(count - 1 - i));
    dims[i] = {round_dim(finest.height * shrink), round_dim(finest.width * shrink)};
  }
  return dims;
}

bool strictly_increasing(const std::vector<Dims>& dims) {
  for (std::size_t i = 1; i < dims.size(); ++i) {
    if (dims[i].height <= dims[i - 1].height || dims[i].width <= dims[i - 1].width) return false;
  }
  return true;
}

}  // namespace

int round_dim(double value) { return std::max(1, static_cast<int>(std::floor(value + 0.5))); }

Dims fit_to_max_dim(Dims input, int max_dim) {
  if (input.height < 1 || input.width < 1) {
    throw Error(ErrorCode::kInvalidArgument, "input dims must be positive");
  }
  const double larger = std::max(input.height, input.width);
  const double ratio = max_dim / larger;
  return {round_dim(input.height * ratio), round_dim(input.width * ratio)};
}

ScaleSchedule compute_scale_schedule(Dims input, int max_dim, int min_dim, double r_target) {
  if (min_dim < 1 || max_dim < min_dim) {
    throw Error(ErrorCode::kInvalidArgument, "need max_dim >= min_dim >= 1");
  }
  if (!(r_target > 1.0)) throw Error(ErrorCode::kInvalidArgument, "scale factor must exceed 1");

  const Dims finest = fit_to_max_dim(input, max_dim);
  const int min_side = std::min(finest.height, finest.width);
  if (min_side < min_dim) {
    throw Error(ErrorCode::kImageTooSmall,
                "image too small: " + std::to_string(finest.height) + "x" +
                    std::to_string(finest.width) + " after resize, min_dim " +
                    std::to_string(min_dim));
  }

  const double span = static_cast<double>(min_side) / min_dim;
  int count = static_cast<int>(std::lround(std::log(span) / std::log(r_target))) + 1;

  ScaleSchedule schedule;
  schedule.min_dim = min_dim;
  schedule.max_dim = max_dim;
  for (; count >= 1; --count) {
    const double factor = count > 1 ? std::pow(span, 1.0 / (count - 1)) : r_target;
    auto dims = chain_dims(finest, factor, count);
    // Very small ratios can round neighbouring scales onto the same size;
    // drop scales until every step adds at least one pixel per axis.
    if (count == 1 || strictly_increasing(dims)) {
      schedule.scale_count = count;
      schedule.factor = factor;
      schedule.dims = std::move(dims);
      break;
    }
  }
  return schedule;
}

ImagePyramid build_pyramid(const ImageGrid& image, const ScaleSchedule& schedule) {
  if (schedule.dims.empty() || image.dims() != schedule.finest()) {
    throw Error(ErrorCode::kDimsMismatch, "build_pyramid: image dims differ from schedule");
  }
  ImagePyramid pyramid{schedule, {}};
  pyramid.levels.reserve(schedule.dims.size());
  for (const Dims& d : schedule.dims) pyramid.levels.push_back(resize(image, d));
  return pyramid;
}

ImageGrid upscale(const ImageGrid& image, Dims target) {
  if (target.height < image.height() || target.width < image.width()) {
    throw Error(ErrorCode::kInvalidArgument, "upscale: target smaller than source");
  }
  if (target == image.dims()) return image;

  struct Lerp {
    int i0, i1;
    double t;
  };
  auto axis = [](int in, int out) {
    std::vector<Lerp> table(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      table[i] = {i0, std::min(i0 + 1, in - 1), src - i0};
    }
    return table;
  };
  const auto rows = axis(image.height(), target.height);
  const auto cols = axis(image.width(), target.width);

  ImageGrid out(target);
  for (int c = 0; c < ImageGrid::kChannels; ++c) {
    for (int y = 0; y < target.height; ++y) {
      const Lerp& ry = rows[y];
      for (int x = 0; x < target.width; ++x) {
        const Lerp& rx = cols[x];
        const double top = image.at(c, ry.i0, rx.i0) * (1.0 - rx.t) + image.at(c, ry.i0, rx.i1) * rx.t;
        const double bottom =
            image.at(c, ry.i1, rx.i0) * (1.0 - rx.t) + image.at(c, ry.i1, rx.i1) * rx.t;
        out.at(c, y, x) = static_cast<float>(top * (1.0 - ry.t) + bottom * ry.t);
      }
    }
  }
  return out;
}

ImageGrid resize(const ImageGrid& image, Dims target) {
  if (target.height < 1 || target.width < 1) {
    throw Error(ErrorCode::kInvalidArgument, "resize: target dims must be positive");
  }
  if (target == image.dims()) return image;
  ImageGrid out = target.height == image.height() ? image : resample_rows(image, target.height);
  if (target.width != out.width()) out = resample_cols(out, target.width);
  return out;
}

Mask resize_nearest(const Mask& mask, Dims target) {
  if (target == mask.dims()) return mask;
  Mask out(target.height, target.width);
  for (int y = 0; y < target.height; ++y) {
    const int sy = std::min(mask.height() - 1,
                            static_cast<int>((y + 0.5) * mask.height() / target.height));
    for (int x = 0; x < target.width; ++x) {
      const int sx =
          std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / target.width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace setgan
