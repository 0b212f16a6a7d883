#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setgan/image.hpp"
#include "setgan/noise.hpp"

namespace setgan {

enum class Activation { kLeakyRelu, kTanh, kNone };

inline constexpr int kBlocksPerNetwork = 5;
inline constexpr int kKernelSize = 3;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStddev = 0.02;

struct BlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  bool batch_norm = true;
  Activation activation = Activation::kLeakyRelu;
};

struct NetworkSpec {
  int scale_index = 0;
  int channels = 0;
  std::vector<BlockSpec> blocks;
};

// 32 kernels per block for scales 0-3, doubling every four scales.
int channels_for_scale(int scale_index);

// conv3x3 -> BN -> LeakyReLU(0.2) for four blocks, then conv3x3 -> Tanh to RGB.
NetworkSpec generator_spec(int scale_index);
// Same body; the last block maps to a single score channel with neither
// normalization nor activation.
NetworkSpec discriminator_spec(int scale_index);

// Trainable scalars implied by a spec (conv weights + biases, BN affine).
std::int64_t spec_param_count(const NetworkSpec& spec);
// Generator plus discriminator for one scale.
std::int64_t param_count(int scale_index);

// Five stacked same-padded 3x3 convolutions see an 11x11 patch.
int receptive_field();

// Fully-convolutional block stack. Batch normalization always uses the
// statistics of the current input (batch size is one image) and keeps no
// running buffers, so frozen networks are safe to share across threads.
class ConvNetImpl : public torch::nn::Module {
 public:
  explicit ConvNetImpl(NetworkSpec spec);

  torch::Tensor forward(const torch::Tensor& input);
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::BatchNorm2d> norms_;  // empty slot for blocks without BN
};
TORCH_MODULE(ConvNet);

struct IterationRecord {
  int iteration = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double rec_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct ScaleModel {
  int scale_index = 0;
  ConvNet generator{nullptr};
  ConvNet discriminator{nullptr};
  double noise_amplitude = 0.0;
  std::uint64_t fixed_rec_seed = 0;
  std::vector<IterationRecord> history;
};

// Zero-mean Gaussian (std 0.02) conv kernels and biases, BN scale 1 shift 0,
// drawn from `init_seed` only.
ConvNet build_generator(int scale_index, std::uint64_t init_seed);
ConvNet build_discriminator(int scale_index, std::uint64_t init_seed);

ScaleModel make_scale_model(int scale_index, std::uint64_t init_seed, double noise_amplitude,
                            std::uint64_t fixed_rec_seed);
ScaleModel clone(const ScaleModel& model);

// Tensor bridge: ImageGrid <-> 1x3xHxW float tensors.
torch::Tensor to_tensor(const ImageGrid& image);
ImageGrid from_tensor(const torch::Tensor& tensor);

// Scale 0: tanh(net(noise)). Scale i > 0: clamp(coarse + net(coarse + noise), -1, 1).
// Differentiable; used by training.
torch::Tensor generator_forward(ConvNet& generator, const torch::Tensor& noise,
                                const std::optional<torch::Tensor>& coarse);

// Frozen-parameter variant over images. Requires coarse dims == noise dims,
// and no coarse input exactly when the model is scale 0.
ImageGrid generator_forward(const ScaleModel& model, const NoiseMap& noise,
                            const ImageGrid* coarse_input);

// Patch score map (1x1xHxW) and its spatial mean.
torch::Tensor discriminator_score_map(ConvNet& discriminator, const torch::Tensor& image);
torch::Tensor discriminator_score(ConvNet& discriminator, const torch::Tensor& image);
double discriminator_forward(const ScaleModel& model, const ImageGrid& image);

// Stable ordering: generator parameters in block order, then discriminator.
std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const ScaleModel& model);
std::vector<float> flatten_parameters(const ScaleModel& model);
void load_parameters(ScaleModel& model, std::span<const float> values);

}  // namespace setgan
