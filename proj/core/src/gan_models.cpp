#include "setgan/gan_models.hpp"

#include <cstring>
#include <string>

#include "setgan/error.hpp"
#include "setgan/random.hpp"

namespace setgan {

namespace {

NetworkSpec body_spec(int scale_index, int out_channels, Activation last_activation,
                      bool last_norm) {
  if (scale_index < 0) throw Error(ErrorCode::kInvalidArgument, "scale index must be >= 0");
  NetworkSpec spec{scale_index, channels_for_scale(scale_index), {}};
  int in = ImageGrid::kChannels;
  for (int b = 0; b < kBlocksPerNetwork; ++b) {
    const bool last = b == kBlocksPerNetwork - 1;
    BlockSpec block;
    block.in_channels = in;
    block.out_channels = last ? out_channels : spec.channels;
    block.batch_norm = last ? last_norm : true;
    block.activation = last ? last_activation : Activation::kLeakyRelu;
    spec.blocks.push_back(block);
    in = block.out_channels;
  }
  return spec;
}

void initialize(ConvNet& net, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  GaussianStream rng(seed);
  for (auto& item : net->named_parameters()) {
    const std::string& name = item.key();
    torch::Tensor& param = item.value();
    const bool is_norm = name.find("_norm.") != std::string::npos;
    const bool is_bias = name.ends_with(".bias");
    if (is_norm) {
      param.fill_(is_bias ? 0.0 : 1.0);
    } else if (is_bias) {
      param.zero_();
    } else {
      std::vector<float> values(static_cast<std::size_t>(param.numel()));
      rng.fill(values, kInitStddev);
      param.copy_(torch::from_blob(values.data(), param.sizes(), torch::kFloat32));
    }
  }
}

ConvNet copy_net(const ConvNet& source) {
  ConvNet copy(source->spec());
  torch::NoGradGuard no_grad;
  auto dst = copy->parameters();
  auto src = source->parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
  return copy;
}

void require_trainable_dims(const torch::Tensor& t, const char* what) {
  if (t.dim() != 4 || t.size(0) != 1 || t.size(1) != ImageGrid::kChannels) {
    throw Error(ErrorCode::kDimsMismatch, std::string(what) + ": expected a 1x3xHxW tensor");
  }
}

}  // namespace

int channels_for_scale(int scale_index) { return 32 << (scale_index / 4); }

NetworkSpec generator_spec(int scale_index) {
  return body_spec(scale_index, ImageGrid::kChannels, Activation::kTanh, false);
}

NetworkSpec discriminator_spec(int scale_index) {
  return body_spec(scale_index, 1, Activation::kNone, false);
}

std::int64_t spec_param_count(const NetworkSpec& spec) {
  std::int64_t total = 0;
  for (const BlockSpec& b : spec.blocks) {
    total += static_cast<std::int64_t>(b.in_channels) * b.out_channels * kKernelSize * kKernelSize;
    total += b.out_channels;
    if (b.batch_norm) total += 2 * b.out_channels;
  }
  return total;
}

std::int64_t param_count(int scale_index) {
  return spec_param_count(generator_spec(scale_index)) +
         spec_param_count(discriminator_spec(scale_index));
}

int receptive_field() { return 1 + kBlocksPerNetwork * (kKernelSize - 1); }

ConvNetImpl::ConvNetImpl(NetworkSpec spec) : spec_(std::move(spec)) {
  for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
    const BlockSpec& block = spec_.blocks[b];
    const std::string prefix = "block" + std::to_string(b);
    convs_.push_back(register_module(
        prefix + "_conv",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(block.in_channels, block.out_channels, kKernelSize)
                              .padding(kKernelSize / 2)
                              .bias(true))));
    if (block.batch_norm) {
      norms_.push_back(register_module(
          prefix + "_norm",
          torch::nn::BatchNorm2d(
              torch::nn::BatchNorm2dOptions(block.out_channels).track_running_stats(false))));
    } else {
      norms_.push_back(torch::nn::BatchNorm2d{nullptr});
    }
  }
}

torch::Tensor ConvNetImpl::forward(const torch::Tensor& input) {
  torch::Tensor x = input;
  for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
    x = convs_[b]->forward(x);
    if (!norms_[b].is_empty()) x = norms_[b]->forward(x);
    switch (spec_.blocks[b].activation) {
      case Activation::kLeakyRelu: x = torch::leaky_relu(x, kLeakySlope); break;
      case Activation::kTanh: x = torch::tanh(x); break;
      case Activation::kNone: break;
    }
  }
  return x;
}

ConvNet build_generator(int scale_index, std::uint64_t init_seed) {
  ConvNet net(generator_spec(scale_index));
  initialize(net, init_seed);
  return net;
}

ConvNet build_discriminator(int scale_index, std::uint64_t init_seed) {
  ConvNet net(discriminator_spec(scale_index));
  // Separate stream so G and D never share draws.
  initialize(net, init_seed ^ 0xD15C0000D15C0000ull);
  return net;
}

ScaleModel make_scale_model(int scale_index, std::uint64_t init_seed, double noise_amplitude,
                            std::uint64_t fixed_rec_seed) {
  if (noise_amplitude < 0.0) throw Error(ErrorCode::kInvalidArgument, "noise amplitude must be >= 0");
  ScaleModel model;
  model.scale_index = scale_index;
  model.generator = build_generator(scale_index, init_seed);
  model.discriminator = build_discriminator(scale_index, init_seed);
  model.noise_amplitude = noise_amplitude;
  model.fixed_rec_seed = fixed_rec_seed;
  return model;
}

ScaleModel clone(const ScaleModel& model) {
  ScaleModel copy;
  copy.scale_index = model.scale_index;
  copy.generator = copy_net(model.generator);
  copy.discriminator = copy_net(model.discriminator);
  copy.noise_amplitude = model.noise_amplitude;
  copy.fixed_rec_seed = model.fixed_rec_seed;
  copy.history = model.history;
  return copy;
}

torch::Tensor to_tensor(const ImageGrid& image) {
  auto values = image.values();
  return torch::from_blob(const_cast<float*>(values.data()),
                          {1, ImageGrid::kChannels, image.height(), image.width()},
                          torch::kFloat32)
      .clone();
}

ImageGrid from_tensor(const torch::Tensor& tensor) {
  require_trainable_dims(tensor, "from_tensor");
  torch::Tensor t = tensor.detach().to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(t.size(2));
  const int w = static_cast<int>(t.size(3));
  std::vector<float> planar(static_cast<std::size_t>(t.numel()));
  std::memcpy(planar.data(), t.data_ptr<float>(), planar.size() * sizeof(float));
  return ImageGrid(h, w, std::move(planar));
}

torch::Tensor generator_forward(ConvNet& generator, const torch::Tensor& noise,
                                const std::optional<torch::Tensor>& coarse) {
  if (!coarse) return generator->forward(noise);
  if (coarse->sizes() != noise.sizes()) {
    throw Error(ErrorCode::kDimsMismatch, "generator: coarse input and noise dims differ");
  }
  return torch::clamp(*coarse + generator->forward(*coarse + noise), -1.0, 1.0);
}

ImageGrid generator_forward(const ScaleModel& model, const NoiseMap& noise,
                            const ImageGrid* coarse_input) {
  if (model.scale_index == 0 && coarse_input != nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "scale 0 generator takes noise only");
  }
  if (model.scale_index > 0 && coarse_input == nullptr) {
    throw Error(ErrorCode::kInvalidArgument,
                "scale " + std::to_string(model.scale_index) + " generator needs a coarse input");
  }
  if (noise.values.dims() != noise.dims ||
      (coarse_input != nullptr && coarse_input->dims() != noise.dims)) {
    throw Error(ErrorCode::kDimsMismatch, "generator: coarse input and noise dims differ");
  }
  torch::NoGradGuard no_grad;
  ConvNet net = model.generator;
  std::optional<torch::Tensor> coarse;
  if (coarse_input != nullptr) coarse = to_tensor(*coarse_input);
  return from_tensor(generator_forward(net, to_tensor(noise.values), coarse));
}

torch::Tensor discriminator_score_map(ConvNet& discriminator, const torch::Tensor& image) {
  return discriminator->forward(image);
}

torch::Tensor discriminator_score(ConvNet& discriminator, const torch::Tensor& image) {
  return discriminator_score_map(discriminator, image).mean();
}

double discriminator_forward(const ScaleModel& model, const ImageGrid& image) {
  const int field = receptive_field();
  if (image.height() < field || image.width() < field) {
    throw Error(ErrorCode::kImageTooSmall,
                "discriminator input smaller than its " + std::to_string(field) + "px receptive field");
  }
  torch::NoGradGuard no_grad;
  ConvNet net = model.discriminator;
  return discriminator_score(net, to_tensor(image)).item<double>();
}

std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const ScaleModel& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : model.generator->named_parameters()) {
    out.emplace_back("generator." + item.key(), item.value());
  }
  for (const auto& item : model.discriminator->named_parameters()) {
    out.emplace_back("discriminator." + item.key(), item.value());
  }
  return out;
}

std::vector<float> flatten_parameters(const ScaleModel& model) {
  std::vector<float> flat;
  flat.reserve(static_cast<std::size_t>(param_count(model.scale_index)));
  for (const auto& [name, param] : named_parameters(model)) {
    torch::Tensor t = param.detach().contiguous();
    const float* p = t.data_ptr<float>();
    flat.insert(flat.end(), p, p + t.numel());
  }
  return flat;
}

void load_parameters(ScaleModel& model, std::span<const float> values) {
  const auto params = named_parameters(model);
  std::int64_t total = 0;
  for (const auto& [name, param] : params) total += param.numel();
  if (static_cast<std::int64_t>(values.size()) != total) {
    throw Error(ErrorCode::kDimsMismatch, "parameter count mismatch: expected " +
                                              std::to_string(total) + ", got " +
                                              std::to_string(values.size()));
  }
  torch::NoGradGuard no_grad;
  std::size_t offset = 0;
  for (const auto& [name, param] : params) {
    const auto n = static_cast<std::size_t>(param.numel());
    param.copy_(torch::from_blob(const_cast<float*>(values.data() + offset), param.sizes(),
                                 torch::kFloat32));
    offset += n;
  }
}

}  // namespace setgan
