#include "setgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>
#include <thread>

#include <ATen/Parallel.h>

#include "setgan/metrics.hpp"
#include "setgan/random.hpp"

namespace setgan {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void set_learning_rate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

void set_requires_grad(ConvNet& net, bool enabled) {
  for (auto& p : net->parameters()) p.set_requires_grad(enabled);
}

torch::optim::Adam make_optimizer(ConvNet& net, const TrainConfig& config) {
  return torch::optim::Adam(
      net->parameters(),
      torch::optim::AdamOptions(config.learning_rate).betas({config.adam_beta1, config.adam_beta2}));
}

void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::kInvalidArgument, "train config: " + message);
}

ScaleEntry entry_for(const ScaleModel& model, double exit_ssim) {
  ScaleEntry entry;
  entry.index = model.scale_index;
  entry.channels = channels_for_scale(model.scale_index);
  entry.noise_amplitude = model.noise_amplitude;
  entry.rec_seed = model.fixed_rec_seed;
  entry.exit_ssim = exit_ssim;
  return entry;
}

}  // namespace

void TrainConfig::validate() const {
  require(iterations_per_scale >= 0, "iterations_per_scale must be >= 0");
  require(g_steps > 0 && d_steps > 0, "g_steps and d_steps must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(lr_decay_factor > 0.0, "lr_decay_factor must be positive");
  require(lr_decay_iteration >= 0, "lr_decay_iteration must be >= 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(alpha_rec >= 0.0, "alpha_rec must be >= 0");
  require(gp_weight >= 0.0, "gp_weight must be >= 0");
  require(ssim_threshold >= 0.0 && ssim_threshold <= 1.01, "ssim_threshold must be in [0, 1.01]");
  require(worker_count >= 1, "worker_count must be >= 1");
  require(min_dim >= 1 && max_dim >= min_dim, "need max_dim >= min_dim >= 1");
  require(scale_factor > 1.0, "scale_factor must exceed 1");
}

double learning_rate_at(const TrainConfig& config, int iteration) {
  return iteration < config.lr_decay_iteration ? config.learning_rate
                                               : config.learning_rate * config.lr_decay_factor;
}

int select_best_scale(const std::vector<double>& per_scale_ssim, double threshold) {
  for (std::size_t i = 0; i < per_scale_ssim.size(); ++i) {
    if (std::clamp(per_scale_ssim[i], 0.0, 1.0) >= threshold) return static_cast<int>(i);
  }
  return per_scale_ssim.empty() ? 0 : static_cast<int>(per_scale_ssim.size()) - 1;
}

std::vector<double> noise_amplitudes(const ImagePyramid& pyramid) {
  std::vector<double> sigma(pyramid.levels.size(), 1.0);
  for (std::size_t i = 1; i < pyramid.levels.size(); ++i) {
    sigma[i] = rmse(upscale(pyramid.levels[i - 1], pyramid.levels[i].dims()), pyramid.levels[i]);
  }
  return sigma;
}

std::optional<ImageGrid> coarse_real(const ImagePyramid& pyramid, int scale_index) {
  if (scale_index == 0) return std::nullopt;
  return upscale(pyramid.levels[scale_index - 1], pyramid.levels[scale_index].dims());
}

ScaleModel initial_scale_model(const ImagePyramid& pyramid, int scale_index,
                               const TrainConfig& config) {
  if (scale_index < 0 || scale_index >= static_cast<int>(pyramid.levels.size())) {
    throw Error(ErrorCode::kInvalidArgument, "scale index outside the pyramid");
  }
  double sigma = 1.0;
  if (scale_index > 0) {
    sigma = rmse(*coarse_real(pyramid, scale_index), pyramid.levels[scale_index]);
  }
  return make_scale_model(scale_index, derive_seed(config.seed, SeedStream::kInit, scale_index), sigma,
                          derive_seed(config.seed, SeedStream::kReconstruction, scale_index));
}

void check_finite(double value, const char* what, int scale_index, int iteration) {
  if (!std::isfinite(value)) {
    std::ostringstream message;
    message << "training diverged at scale " << scale_index << ", iteration " << iteration << ": "
            << what << " = " << value;
    throw Error(ErrorCode::kDivergence, message.str());
  }
}

std::optional<ScaleModel> train_scale(const ImagePyramid& pyramid, int scale_index,
                                      const TrainConfig& config, const ScaleTrainingHooks& hooks) {
  config.validate();
  // One intra-op thread per worker keeps results independent of how many
  // workers run concurrently.
  at::set_num_threads(1);

  ScaleModel model = initial_scale_model(pyramid, scale_index, config);
  if (config.iterations_per_scale == 0) return model;

  const ImageGrid& target = pyramid.levels[scale_index];
  const Dims dims = target.dims();
  const torch::Tensor real = to_tensor(target);
  std::optional<torch::Tensor> coarse;
  if (auto c = coarse_real(pyramid, scale_index)) coarse = to_tensor(*c);
  const torch::Tensor rec_noise =
      scale_index == 0
          ? to_tensor(make_noise_map(dims, model.fixed_rec_seed, model.noise_amplitude).values)
          : torch::zeros_like(real);

  ConvNet& generator = model.generator;
  ConvNet& discriminator = model.discriminator;
  auto g_optimizer = make_optimizer(generator, config);
  auto d_optimizer = make_optimizer(discriminator, config);

  GaussianStream noise_rng(derive_seed(config.seed, SeedStream::kTrainNoise, scale_index));
  GaussianStream mix_rng(derive_seed(config.seed, SeedStream::kPenaltyMix, scale_index));
  ImageGrid noise(dims);
  const auto start = Clock::now();

  for (int it = 0; it < config.iterations_per_scale; ++it) {
    if (hooks.cancelled && hooks.cancelled()) return std::nullopt;
    const double lr = learning_rate_at(config, it);
    set_learning_rate(g_optimizer, lr);
    set_learning_rate(d_optimizer, lr);

    noise_rng.fill(noise.values(), model.noise_amplitude);
    const torch::Tensor z = to_tensor(noise);

    IterationRecord record;
    record.iteration = it;
    record.lr = lr;

    set_requires_grad(discriminator, true);
    for (int step = 0; step < config.d_steps; ++step) {
      torch::Tensor fake;
      {
        torch::NoGradGuard no_grad;
        fake = generator_forward(generator, z, coarse);
      }
      d_optimizer.zero_grad();
      const torch::Tensor d_real = discriminator_score(discriminator, real);
      const torch::Tensor d_fake = discriminator_score(discriminator, fake);
      const torch::Tensor gp = gradient_penalty(discriminator, real, fake, mix_rng.uniform());
      const torch::Tensor d_loss = d_fake - d_real + config.gp_weight * gp;
      d_loss.backward();
      d_optimizer.step();
      record.d_loss = d_loss.item<double>();
      if (hooks.d_step_counter) hooks.d_step_counter->fetch_add(1);
    }

    set_requires_grad(discriminator, false);
    for (int step = 0; step < config.g_steps; ++step) {
      g_optimizer.zero_grad();
      const torch::Tensor fake = generator_forward(generator, z, coarse);
      const torch::Tensor adversarial = -discriminator_score(discriminator, fake);
      const torch::Tensor rec = torch::mse_loss(generator_forward(generator, rec_noise, coarse), real);
      const torch::Tensor g_loss = adversarial + config.alpha_rec * rec;
      g_loss.backward();
      g_optimizer.step();
      record.g_loss = g_loss.item<double>();
      record.rec_loss = rec.item<double>();
      if (hooks.g_step_counter) hooks.g_step_counter->fetch_add(1);
    }

    check_finite(record.d_loss, "d_loss", scale_index, it);
    check_finite(record.g_loss, "g_loss", scale_index, it);
    check_finite(record.rec_loss, "rec_loss", scale_index, it);
    record.wall_ms = elapsed_ms(start);
    model.history.push_back(record);
    if (hooks.on_iteration) hooks.on_iteration(scale_index, record);
  }
  set_requires_grad(discriminator, true);
  return model;
}

ExitDecision evaluate_exit(const ScaleModel& model, const ImagePyramid& pyramid, double threshold) {
  const int i = model.scale_index;
  const ImageGrid& level = pyramid.levels.at(i);
  const NoiseMap z = make_noise_map(level.dims(), model.fixed_rec_seed, model.noise_amplitude);
  const auto coarse = coarse_real(pyramid, i);
  const ImageGrid fake = generator_forward(model, z, coarse ? &*coarse : nullptr);
  const double value = ssim(upscale(fake, pyramid.source().dims()), pyramid.source());
  return {value, std::clamp(value, 0.0, 1.0) >= threshold};
}

std::string_view to_string(ScaleState state) {
  switch (state) {
    case ScaleState::kPending: return "pending";
    case ScaleState::kTraining: return "training";
    case ScaleState::kDone: return "done";
    case ScaleState::kCancelled: return "cancelled";
    case ScaleState::kFailed: return "failed";
  }
  return "unknown";
}

ImagePyramid prepare_pyramid(const ImageGrid& image, const TrainConfig& config) {
  const ScaleSchedule schedule =
      compute_scale_schedule(image.dims(), config.max_dim, config.min_dim, config.scale_factor);
  ImageGrid source = resize(image, schedule.finest());
  source.clamp_unit();
  return build_pyramid(source, schedule);
}

std::string image_hash(const ImageGrid& image) {
  std::vector<std::uint8_t> bytes(8 + image.values().size() * sizeof(float));
  const std::int32_t h = image.height();
  const std::int32_t w = image.width();
  std::memcpy(bytes.data(), &h, 4);
  std::memcpy(bytes.data() + 4, &w, 4);
  std::memcpy(bytes.data() + 8, image.values().data(), image.values().size() * sizeof(float));
  return sha256_hex(bytes);
}

std::string training_id(const std::string& source_hash, const TrainConfig& config) {
  std::ostringstream key;
  key.precision(17);
  key << source_hash << '|' << config.iterations_per_scale << '|' << config.g_steps << '|'
      << config.d_steps << '|' << config.learning_rate << '|' << config.lr_decay_factor << '|'
      << config.lr_decay_iteration << '|' << config.adam_beta1 << '|' << config.adam_beta2 << '|'
      << config.alpha_rec << '|' << config.gp_weight << '|' << config.ssim_threshold << '|'
      << config.seed << '|' << config.max_dim << '|' << config.min_dim << '|'
      << config.scale_factor;
  const std::string text = key.str();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}).substr(0, 16);
}

TrainingResult train_all_parallel(const ImageGrid& image, const TrainConfig& config,
                                  const TrainingOptions& options) {
  config.validate();
  const ImagePyramid pyramid = prepare_pyramid(image, config);
  const int count = pyramid.schedule.scale_count;

  std::mutex mutex;
  std::vector<std::optional<ScaleModel>> models(count);
  std::vector<std::optional<double>> ssim_values(count);
  std::vector<double> wall(count, 0.0);
  std::vector<ScaleState> states(count, ScaleState::kPending);
  std::optional<Error> failure;
  std::atomic<int> next{0};
  std::atomic<int> cancel_above{INT_MAX};

  auto set_state = [&](int i, ScaleState state) {
    {
      std::lock_guard lock(mutex);
      states[i] = state;
    }
    if (options.on_state) options.on_state(i, state);
  };

  auto worker = [&] {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      if (i > cancel_above.load() || (options.stop && options.stop->load())) {
        set_state(i, ScaleState::kCancelled);
        continue;
      }
      set_state(i, ScaleState::kTraining);
      ScaleTrainingHooks hooks;
      hooks.on_iteration = options.on_iteration;
      hooks.cancelled = [&cancel_above, &options, i] {
        return i > cancel_above.load() || (options.stop && options.stop->load());
      };
      const auto start = Clock::now();
      std::optional<ScaleModel> model;
      bool failed = false;
      for (int attempt = 0; attempt < 2; ++attempt) {
        try {
          model = train_scale(pyramid, i, config, hooks);
          failed = false;
          break;
        } catch (const Error& e) {
          failed = true;
          if (attempt == 1) {
            std::lock_guard lock(mutex);
            if (!failure) failure = e;
          }
        } catch (const std::exception& e) {
          failed = true;
          if (attempt == 1) {
            std::lock_guard lock(mutex);
            if (!failure) failure = Error(ErrorCode::kProtocol, e.what());
          }
        }
      }
      if (failed) {
        set_state(i, ScaleState::kFailed);
        continue;
      }
      if (!model) {
        set_state(i, ScaleState::kCancelled);
        continue;
      }
      const ExitDecision decision = evaluate_exit(*model, pyramid, config.ssim_threshold);
      const double seconds = elapsed_ms(start) / 1000.0;
      {
        std::lock_guard lock(mutex);
        ssim_values[i] = decision.ssim_value;
        wall[i] = seconds;
        models[i] = *model;
        if (options.cancel_above_exit && decision.exit) {
          int current = cancel_above.load();
          while (i < current && !cancel_above.compare_exchange_weak(current, i)) {
          }
        }
      }
      set_state(i, ScaleState::kDone);
      if (options.on_scale_done) {
        options.on_scale_done(ScaleOutcome{i, decision.ssim_value, decision.exit, seconds}, *model);
      }
    }
  };

  const int worker_count = options.serial ? 1 : std::min(config.worker_count, count);
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < worker_count; ++w) pool.emplace_back(worker);
  }

  TrainingResult result;
  result.per_scale_ssim = ssim_values;
  result.per_scale_wall_time = wall;
  result.states = states;
  result.failure = failure;

  std::vector<double> prefix_ssim;
  int prefix = 0;
  while (prefix < count && models[prefix]) {
    prefix_ssim.push_back(*ssim_values[prefix]);
    ++prefix;
  }
  result.best_scale = select_best_scale(prefix_ssim, config.ssim_threshold);
  const int kept = options.cancel_above_exit ? std::min(prefix, result.best_scale + 1) : prefix;

  Manifest& manifest = result.bundle.manifest;
  manifest.source_image_hash = image_hash(image);
  manifest.job_id = training_id(manifest.source_image_hash, config);
  manifest.schedule = pyramid.schedule;
  manifest.best_scale = prefix > 0 ? result.best_scale : -1;
  manifest.threshold = config.ssim_threshold;
  manifest.seed = config.seed;
  for (int i = 0; i < kept; ++i) {
    manifest.scales.push_back(entry_for(*models[i], *ssim_values[i]));
    result.bundle.scales.push_back(std::move(*models[i]));
  }
  refresh_scale_entries(result.bundle);
  return result;
}

TrainedBundle untrained_bundle(const ScaleSchedule& schedule, std::uint64_t seed) {
  TrainedBundle bundle;
  bundle.manifest.job_id = "untrained-" + std::to_string(seed);
  bundle.manifest.schedule = schedule;
  bundle.manifest.best_scale = schedule.scale_count - 1;
  bundle.manifest.seed = seed;
  for (int i = 0; i < schedule.scale_count; ++i) {
    const double sigma = i == 0 ? 1.0 : 0.1;
    ScaleModel model = make_scale_model(i, derive_seed(seed, SeedStream::kInit, i), sigma,
                                        derive_seed(seed, SeedStream::kReconstruction, i));
    bundle.manifest.scales.push_back(entry_for(model, 0.0));
    bundle.scales.push_back(std::move(model));
  }
  refresh_scale_entries(bundle);
  return bundle;
}

}  // namespace setgan
