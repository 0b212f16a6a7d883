#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "setgan/bundle.hpp"
#include "setgan/error.hpp"
#include "setgan/gan_models.hpp"
#include "setgan/pyramid.hpp"

namespace setgan {

struct TrainConfig {
  int iterations_per_scale = 2000;
  int g_steps = 3;
  int d_steps = 3;
  double learning_rate = 0.0005;
  double lr_decay_factor = 0.1;
  int lr_decay_iteration = 1600;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double alpha_rec = 10.0;
  double gp_weight = 0.1;
  double ssim_threshold = 0.85;
  int worker_count = 4;
  std::uint64_t seed = 0;
  int max_dim = 256;
  int min_dim = 25;
  double scale_factor = 4.0 / 3.0;

  // Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

// Step learning rate: base until lr_decay_iteration, base*factor afterwards.
double learning_rate_at(const TrainConfig& config, int iteration);

// Smallest scale whose (clamped) SSIM reaches the threshold, else the last
// evaluated scale.
int select_best_scale(const std::vector<double>& per_scale_ssim, double threshold);

// Residual noise amplitudes: sigma_0 = 1, sigma_i = RMSE(upscale(X_{i-1}), X_i).
std::vector<double> noise_amplitudes(const ImagePyramid& pyramid);

// Untrained model for a scale, exactly as train_scale starts from it.
ScaleModel initial_scale_model(const ImagePyramid& pyramid, int scale_index,
                               const TrainConfig& config);

// The real coarse input for a scale (upscaled X_{i-1}), or none at scale 0.
std::optional<ImageGrid> coarse_real(const ImagePyramid& pyramid, int scale_index);

struct ScaleTrainingHooks {
  // Called after every iteration with that iteration's record.
  std::function<void(int scale, const IterationRecord&)> on_iteration;
  // Polled between iterations; returning true abandons the scale.
  std::function<bool()> cancelled;
  // Counts optimizer steps (for schedule checks).
  std::atomic<int>* d_step_counter = nullptr;
  std::atomic<int>* g_step_counter = nullptr;
};

// Adversarial training of one scale against its real pyramid level. Throws
// kDivergence with the offending iteration if a loss becomes non-finite.
// Returns nullopt only when cancelled.
std::optional<ScaleModel> train_scale(const ImagePyramid& pyramid, int scale_index,
                                      const TrainConfig& config,
                                      const ScaleTrainingHooks& hooks = {});

// F_i = G_i(fixed noise, upscaled X_{i-1}); SSIM against the finest level
// after upscaling F_i to its dims.
struct ExitDecision {
  double ssim_value = 0.0;
  bool exit = false;
};
ExitDecision evaluate_exit(const ScaleModel& model, const ImagePyramid& pyramid, double threshold);

void check_finite(double value, const char* what, int scale_index, int iteration);

enum class ScaleState { kPending, kTraining, kDone, kCancelled, kFailed };
std::string_view to_string(ScaleState state);

struct ScaleOutcome {
  int scale_index = 0;
  double exit_ssim = 0.0;
  bool exit = false;
  double wall_seconds = 0.0;
};

struct TrainingOptions {
  // Cancel scales above the first scale known to satisfy the threshold.
  bool cancel_above_exit = false;
  // Forces index-ordered, single-worker training.
  bool serial = false;
  // Invoked from the worker thread once a scale is trained and evaluated.
  std::function<void(const ScaleOutcome&, const ScaleModel&)> on_scale_done;
  std::function<void(int scale, ScaleState)> on_state;
  std::function<void(int scale, const IterationRecord&)> on_iteration;
  // When set and true, remaining scales are abandoned as cancelled.
  const std::atomic<bool>* stop = nullptr;
};

struct TrainingResult {
  TrainedBundle bundle;  // prefix 0..k of completed scales
  int best_scale = 0;
  std::vector<std::optional<double>> per_scale_ssim;
  std::vector<double> per_scale_wall_time;
  std::vector<ScaleState> states;
  // Set when a scale failed twice; the bundle still holds the completed prefix.
  std::optional<Error> failure;
};

ImagePyramid prepare_pyramid(const ImageGrid& image, const TrainConfig& config);

// Content id of a training job: hash of source image, schedule and every
// hyperparameter that influences parameters.
std::string training_id(const std::string& source_hash, const TrainConfig& config);
std::string image_hash(const ImageGrid& image);

// Trains every scale with up to worker_count workers. A failing scale is
// retried once; a second failure is reported in TrainingResult::failure.
TrainingResult train_all_parallel(const ImageGrid& image, const TrainConfig& config,
                                  const TrainingOptions& options = {});

// Randomly initialised bundle for a schedule; used for tests and tooling
// that only need a structurally valid model chain.
TrainedBundle untrained_bundle(const ScaleSchedule& schedule, std::uint64_t seed);

}  // namespace setgan
