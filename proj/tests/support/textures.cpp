#include "textures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "setgan/random.hpp"

namespace setgan::testing {

ImageGrid make_texture(Dims dims, std::uint64_t seed) {
  GaussianStream rng(seed);
  const int cell = 9;
  const int gy = dims.height / cell + 2;
  const int gx = dims.width / cell + 2;
  struct Site {
    double y, x;
    float rgb[3];
  };
  std::vector<Site> sites;
  for (int j = 0; j < gy; ++j) {
    for (int i = 0; i < gx; ++i) {
      Site s{(j - 0.5 + rng.uniform()) * cell, (i - 0.5 + rng.uniform()) * cell, {}};
      const double shade = 0.35 * rng.next();
      s.rgb[0] = static_cast<float>(0.15 + shade + 0.1 * rng.next());
      s.rgb[1] = static_cast<float>(-0.05 + shade + 0.1 * rng.next());
      s.rgb[2] = static_cast<float>(-0.3 + shade + 0.1 * rng.next());
      sites.push_back(s);
    }
  }
  ImageGrid out(dims);
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      double best = 1e30, second = 1e30;
      const Site* nearest = nullptr;
      for (const Site& s : sites) {
        const double d = (s.y - y) * (s.y - y) + (s.x - x) * (s.x - x);
        if (d < best) {
          second = best;
          best = d;
          nearest = &s;
        } else if (d < second) {
          second = d;
        }
      }
      // Dark mortar where two cells meet.
      const double edge = std::sqrt(second) - std::sqrt(best);
      const double mortar = edge < 1.2 ? -0.45 : 0.0;
      const double ripple = 0.06 * std::sin(0.9 * x + 0.4 * y);
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = std::clamp(static_cast<float>(nearest->rgb[c] + mortar + ripple), -0.9f, 0.9f);
      }
    }
  }
  return out;
}

ImageGrid make_clipart(Dims dims) {
  ImageGrid out(dims);
  const float sky[3] = {-0.2f, 0.1f, 0.7f};
  const float ground[3] = {0.4f, 0.1f, -0.5f};
  const float sun[3] = {0.9f, 0.8f, -0.6f};
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const float* c = y < dims.height * 3 / 5 ? sky : ground;
      const double dy = y - dims.height * 0.25;
      const double dx = x - dims.width * 0.7;
      if (dy * dy + dx * dx < (dims.width * 0.12) * (dims.width * 0.12)) c = sun;
      for (int k = 0; k < 3; ++k) out.at(k, y, x) = c[k];
    }
  }
  return out;
}

std::pair<ImageGrid, Mask> make_composite(const ImageGrid& background) {
  ImageGrid out = background;
  Mask mask(background.height(), background.width());
  const int y0 = background.height() / 3, y1 = background.height() / 2;
  const int x0 = background.width() / 3, x1 = background.width() / 2;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      out.at(0, y, x) = -0.6f;
      out.at(1, y, x) = 0.5f;
      out.at(2, y, x) = 0.6f;
      mask.at(y, x) = 255;
    }
  }
  return {out, mask};
}

ImageGrid random_image(Dims dims, std::uint64_t seed) {
  GaussianStream rng(seed);
  ImageGrid out(dims);
  for (float& v : out.values()) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  return out;
}

TrainConfig pilot_config() {
  TrainConfig c;
  c.iterations_per_scale = 500;
  c.lr_decay_iteration = 400;
  c.max_dim = kPilotSize;
  c.min_dim = 25;
  c.worker_count = 4;
  c.seed = 11;
  return c;
}

std::filesystem::path pilot_dir() {
  if (const char* env = std::getenv("SETGAN_PILOT_DIR")) return env;
  return std::filesystem::temp_directory_path() / "setgan-pilot";
}

TrainedBundle toy_bundle(int size, int min_dim, std::uint64_t seed) {
  return untrained_bundle(compute_scale_schedule({size, size}, size, min_dim, 4.0 / 3.0), seed);
}

}  // namespace setgan::testing
