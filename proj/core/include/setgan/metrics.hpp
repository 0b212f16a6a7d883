#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "setgan/gan_models.hpp"
#include "setgan/image.hpp"

namespace setgan {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

struct SsimReport {
  double value = 0.0;
  int window = 0;   // effective window after fitting to the image
  double sigma = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

// ITU-R BT.601 luma of an image mapped from [-1, 1] to [0, 1], row-major.
std::vector<double> luminance(const ImageGrid& image);

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int window, double sigma);

// Mean SSIM over all fully-contained windows of the luminance channel.
// The window shrinks to the largest odd size that fits smaller images.
SsimReport ssim_report(const ImageGrid& x, const ImageGrid& y, const SsimOptions& options = {});
double ssim(const ImageGrid& x, const ImageGrid& y, const SsimOptions& options = {});

struct AdversarialLoss {
  double gen_loss = 0.0;
  double disc_loss = 0.0;
};

// Wasserstein form with gradient penalty.
AdversarialLoss adversarial_loss(double d_real, double d_fake, double gp, double gp_weight);

using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

// (||grad_x D(x_hat)||_2 - 1)^2 at x_hat = eps*real + (1-eps)*fake.
// The returned tensor keeps the graph so the penalty can be backpropagated
// into the critic's parameters.
torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, double epsilon);
torch::Tensor gradient_penalty(ConvNet& discriminator, const torch::Tensor& real,
                               const torch::Tensor& fake, double epsilon);
double gradient_penalty(ConvNet& discriminator, const ImageGrid& real, const ImageGrid& fake,
                        std::uint64_t mix_seed);
// Mixing coefficient drawn uniformly from `mix_seed`.
double penalty_mix(std::uint64_t mix_seed);

// Scale 0: MSE(G_0(z*), target) with z* drawn from the model's fixed seed.
// Scale i > 0: MSE(G_i(0, coarse_real), target) where coarse_real has already
// been upscaled to the target dims.
double reconstruction_loss(const ScaleModel& model, const ImageGrid* coarse_real,
                           const ImageGrid& target);

// Variance of the 4-neighbour Laplacian of the luminance (interior pixels).
double laplacian_variance(const ImageGrid& image);

}  // namespace setgan
