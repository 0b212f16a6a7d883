#include "setgan/image.hpp"

#include <algorithm>
#include <string>

#include "setgan/error.hpp"

namespace setgan {

ImageGrid::ImageGrid(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "image dims must be positive, got " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
  data_.assign(kChannels * plane_size(), fill);
}

ImageGrid::ImageGrid(int height, int width, std::vector<float> planar)
    : height_(height), width_(width), data_(std::move(planar)) {
  if (height < 1 || width < 1 || data_.size() != kChannels * plane_size()) {
    throw Error(ErrorCode::kInvalidArgument, "planar buffer does not match image dims");
  }
}

void ImageGrid::clamp_unit() noexcept {
  for (float& v : data_) v = std::clamp(v, -1.0f, 1.0f);
}

bool ImageGrid::within_unit_range() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= -1.0f && v <= 1.0f; });
}

std::size_t Mask::count_editable() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](std::uint8_t v) { return v != 0; }));
}

double mean(const ImageGrid& image) {
  double sum = 0.0;
  for (float v : image.values()) sum += v;
  return image.empty() ? 0.0 : sum / static_cast<double>(image.values().size());
}

double mse(const ImageGrid& a, const ImageGrid& b) {
  if (a.dims() != b.dims()) throw Error(ErrorCode::kDimsMismatch, "mse: dims differ");
  double sum = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    sum += d * d;
  }
  return av.empty() ? 0.0 : sum / static_cast<double>(av.size());
}

}  // namespace setgan
