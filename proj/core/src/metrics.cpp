#include "setgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "setgan/error.hpp"
#include "setgan/random.hpp"

namespace setgan {

namespace {

// 'valid' separable filtering of a row-major plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int height, int width,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int out_w = width - k + 1;
  const int out_h = height - k + 1;
  std::vector<double> horizontal(static_cast<std::size_t>(height) * out_w);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += taps[t] * plane[static_cast<std::size_t>(y) * width + x + t];
      horizontal[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += taps[t] * horizontal[static_cast<std::size_t>(y + t) * out_w + x];
      out[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  return out;
}

std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

std::vector<double> luminance(const ImageGrid& image) {
  std::vector<double> luma(image.plane_size());
  auto r = image.plane(0);
  auto g = image.plane(1);
  auto b = image.plane(2);
  for (std::size_t i = 0; i < luma.size(); ++i) {
    const double rr = (r[i] + 1.0) * 0.5;
    const double gg = (g[i] + 1.0) * 0.5;
    const double bb = (b[i] + 1.0) * 0.5;
    luma[i] = 0.299 * rr + 0.587 * gg + 0.114 * bb;
  }
  return luma;
}

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(window);
  const double center = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    taps[i] = std::exp(-(i - center) * (i - center) / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

SsimReport ssim_report(const ImageGrid& x, const ImageGrid& y, const SsimOptions& options) {
  if (x.dims() != y.dims()) throw Error(ErrorCode::kDimsMismatch, "ssim: dims differ");
  int window = std::min({options.window, x.height(), x.width()});
  if (window % 2 == 0) --window;

  SsimReport report;
  report.window = window;
  report.sigma = options.sigma;
  report.c1 = std::pow(options.k1 * options.dynamic_range, 2);
  report.c2 = std::pow(options.k2 * options.dynamic_range, 2);

  const auto taps = gaussian_taps(window, options.sigma);
  const auto lx = luminance(x);
  const auto ly = luminance(y);
  const int h = x.height();
  const int w = x.width();
  const auto mu_x = filter_valid(lx, h, w, taps);
  const auto mu_y = filter_valid(ly, h, w, taps);
  const auto exx = filter_valid(product(lx, lx), h, w, taps);
  const auto eyy = filter_valid(product(ly, ly), h, w, taps);
  const auto exy = filter_valid(product(lx, ly), h, w, taps);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double var_x = exx[i] - mu_x[i] * mu_x[i];
    const double var_y = eyy[i] - mu_y[i] * mu_y[i];
    const double cov = exy[i] - mu_x[i] * mu_y[i];
    const double numerator = (2.0 * mu_x[i] * mu_y[i] + report.c1) * (2.0 * cov + report.c2);
    const double denominator = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + report.c1) *
                               (var_x + var_y + report.c2);
    total += numerator / denominator;
  }
  report.value = total / static_cast<double>(mu_x.size());
  return report;
}

double ssim(const ImageGrid& x, const ImageGrid& y, const SsimOptions& options) {
  return ssim_report(x, y, options).value;
}

AdversarialLoss adversarial_loss(double d_real, double d_fake, double gp, double gp_weight) {
  if (gp_weight < 0.0) throw Error(ErrorCode::kInvalidArgument, "gp_weight must be >= 0");
  return {-d_fake, d_fake - d_real + gp_weight * gp};
}

torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, double epsilon) {
  if (real.sizes() != fake.sizes()) {
    throw Error(ErrorCode::kDimsMismatch, "gradient penalty: real and fake dims differ");
  }
  torch::Tensor mixed = (epsilon * real + (1.0 - epsilon) * fake).detach().requires_grad_(true);
  torch::Tensor score = critic(mixed);
  torch::Tensor grad = torch::autograd::grad({score}, {mixed}, {}, /*retain_graph=*/true,
                                             /*create_graph=*/true)[0];
  return (grad.flatten().norm(2) - 1.0).pow(2);
}

torch::Tensor gradient_penalty(ConvNet& discriminator, const torch::Tensor& real,
                               const torch::Tensor& fake, double epsilon) {
  return gradient_penalty(
      [&discriminator](const torch::Tensor& x) { return discriminator_score(discriminator, x); },
      real, fake, epsilon);
}

double penalty_mix(std::uint64_t mix_seed) { return GaussianStream(mix_seed).uniform(); }

double gradient_penalty(ConvNet& discriminator, const ImageGrid& real, const ImageGrid& fake,
                        std::uint64_t mix_seed) {
  if (real.dims() != fake.dims()) {
    throw Error(ErrorCode::kDimsMismatch, "gradient penalty: real and fake dims differ");
  }
  return gradient_penalty(discriminator, to_tensor(real), to_tensor(fake), penalty_mix(mix_seed))
      .item<double>();
}

double reconstruction_loss(const ScaleModel& model, const ImageGrid* coarse_real,
                           const ImageGrid& target) {
  if (model.scale_index == 0) {
    const NoiseMap z = make_noise_map(target.dims(), model.fixed_rec_seed, model.noise_amplitude);
    return mse(generator_forward(model, z, nullptr), target);
  }
  if (coarse_real == nullptr || coarse_real->dims() != target.dims()) {
    throw Error(ErrorCode::kDimsMismatch, "reconstruction loss: coarse input must match target dims");
  }
  return mse(generator_forward(model, zero_noise(target.dims()), coarse_real), target);
}

double laplacian_variance(const ImageGrid& image) {
  const auto luma = luminance(image);
  const int h = image.height();
  const int w = image.width();
  if (h < 3 || w < 3) return 0.0;
  std::vector<double> response;
  response.reserve(static_cast<std::size_t>(h - 2) * (w - 2));
  auto at = [&](int y, int x) { return luma[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      response.push_back(at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x));
    }
  }
  double m = 0.0;
  for (double v : response) m += v;
  m /= static_cast<double>(response.size());
  double var = 0.0;
  for (double v : response) var += (v - m) * (v - m);
  return var / static_cast<double>(response.size());
}

}  // namespace setgan
