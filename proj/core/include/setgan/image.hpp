#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace setgan {

struct Dims {
  int height = 0;
  int width = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Planar RGB image (channel-major, then rows) with samples nominally in
// [-1, 1].
class ImageGrid {
 public:
  static constexpr int kChannels = 3;

  ImageGrid() = default;
  ImageGrid(int height, int width, float fill = 0.0f);
  ImageGrid(Dims dims, float fill = 0.0f) : ImageGrid(dims.height, dims.width, fill) {}
  ImageGrid(int height, int width, std::vector<float> planar);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Dims dims() const noexcept { return {height_, width_}; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  float& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  std::span<float> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  // Clamps every sample into [-1, 1].
  void clamp_unit() noexcept;
  bool within_unit_range() const noexcept;

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Single-channel edit mask; nonzero marks the editable region.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Dims dims() const noexcept { return {height_, width_}; }

  std::uint8_t& at(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  bool editable(int y, int x) const noexcept { return at(y, x) != 0; }
  std::size_t count_editable() const noexcept;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

double mean(const ImageGrid& image);
// Mean squared difference over all samples; dims must match.
double mse(const ImageGrid& a, const ImageGrid& b);
inline double rmse(const ImageGrid& a, const ImageGrid& b) { return std::sqrt(mse(a, b)); }

}  // namespace setgan
