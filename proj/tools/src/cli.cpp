#include "setgan_cli/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "setgan/bundle.hpp"
#include "setgan/editor_apps.hpp"
#include "setgan/image_io.hpp"
#include "setgan/inference.hpp"
#include "setgan/profiler.hpp"
#include "setgan/protocol.hpp"
#include "setgan/trainer.hpp"

namespace setgan::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kImageTooSmall:
    case ErrorCode::kDimsMismatch:
    case ErrorCode::kScaleUnavailable:
      return kExitUsage;
    case ErrorCode::kDivergence:
      return kExitDivergence;
    case ErrorCode::kBadFormat:
    case ErrorCode::kVersionMismatch:
    case ErrorCode::kHashMismatch:
    case ErrorCode::kTruncated:
    case ErrorCode::kCorruptStream:
    case ErrorCode::kNotFound:
    case ErrorCode::kNotReady:
    case ErrorCode::kUnauthorized:
    case ErrorCode::kProtocol:
      return kExitProtocol;
    case ErrorCode::kIo:
    case ErrorCode::kSensorUnavailable:
      return kExitIo;
  }
  return kExitProtocol;
}

namespace {

// Every TrainConfig field as an optional flag; unset flags fall through to
// the config file, then to the defaults.
struct TrainFlags {
  std::optional<int> iterations, g_steps, d_steps, lr_decay_iteration, workers, max_dim, min_dim;
  std::optional<double> lr, lr_decay_factor, beta1, beta2, alpha_rec, gp_weight, threshold, scale_factor;
  std::optional<std::uint64_t> seed;
  std::string config_file;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "TrainConfig JSON file")->check(CLI::ExistingFile);
    app.add_option("--iterations", iterations, "iterations per scale");
    app.add_option("--g-steps", g_steps, "generator steps per iteration");
    app.add_option("--d-steps", d_steps, "discriminator steps per iteration");
    app.add_option("--lr", lr, "Adam learning rate");
    app.add_option("--lr-decay-factor", lr_decay_factor, "learning-rate multiplier after the milestone");
    app.add_option("--lr-decay-iteration", lr_decay_iteration, "iteration at which the rate decays");
    app.add_option("--beta1", beta1, "Adam beta1");
    app.add_option("--beta2", beta2, "Adam beta2");
    app.add_option("--alpha-rec", alpha_rec, "reconstruction loss weight");
    app.add_option("--gp-weight", gp_weight, "gradient penalty weight");
    app.add_option("--threshold", threshold, "SSIM early-exit threshold T");
    app.add_option("--workers", workers, "parallel training workers");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--max-dim", max_dim, "finest level max side");
    app.add_option("--min-dim", min_dim, "coarsest level min side");
    app.add_option("--scale-factor", scale_factor, "target scale factor r");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) {
      const auto bytes = read_file(config_file);
      c = config_from_json(std::string(bytes.begin(), bytes.end()));
    }
    if (iterations) c.iterations_per_scale = *iterations;
    if (g_steps) c.g_steps = *g_steps;
    if (d_steps) c.d_steps = *d_steps;
    if (lr) c.learning_rate = *lr;
    if (lr_decay_factor) c.lr_decay_factor = *lr_decay_factor;
    if (lr_decay_iteration) c.lr_decay_iteration = *lr_decay_iteration;
    if (beta1) c.adam_beta1 = *beta1;
    if (beta2) c.adam_beta2 = *beta2;
    if (alpha_rec) c.alpha_rec = *alpha_rec;
    if (gp_weight) c.gp_weight = *gp_weight;
    if (threshold) c.ssim_threshold = *threshold;
    if (workers) c.worker_count = *workers;
    if (seed) c.seed = *seed;
    if (max_dim) c.max_dim = *max_dim;
    if (min_dim) c.min_dim = *min_dim;
    if (scale_factor) c.scale_factor = *scale_factor;
    c.validate();
    return c;
  }
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string telemetry_json(const TrainingResult& result, const TrainConfig& config) {
  json scales = json::array();
  for (std::size_t i = 0; i < result.states.size(); ++i) {
    json row = {{"index", i},
                {"state", std::string(to_string(result.states[i]))},
                {"wall_seconds", result.per_scale_wall_time[i]}};
    if (result.per_scale_ssim[i]) row["exit_ssim"] = *result.per_scale_ssim[i];
    if (static_cast<int>(i) < result.bundle.available_scales()) {
      json history = json::array();
      for (const IterationRecord& r : result.bundle.scales[i].history) {
        history.push_back({r.iteration, r.d_loss, r.g_loss, r.rec_loss, r.lr, r.wall_ms});
      }
      row["history_columns"] = {"iteration", "d_loss", "g_loss", "rec_loss", "lr", "wall_ms"};
      row["history"] = history;
    }
    scales.push_back(row);
  }
  json j = {{"best_scale", result.best_scale},
            {"config", json::parse(config_to_json(config))},
            {"scales", scales}};
  if (result.failure) {
    j["failure"] = {{"code", std::string(to_string(result.failure->code()))},
                    {"message", result.failure->what()}};
  }
  return j.dump(2);
}

int cmd_train(const std::string& image_path, const fs::path& out_path, const std::string& mode_text,
              const std::string& server, const std::string& write_config, const TrainFlags& flags,
              std::ostream& out) {
  const TrainConfig config = flags.resolve();
  if (!write_config.empty()) write_text(write_config, config_to_json(config) + "\n");
  const DeliveryMode mode = parse_delivery_mode(mode_text);
  const ImageGrid image = load_image(image_path);

  if (!server.empty()) {
    const auto [host, port] = parse_server_address(server);
    ModelClient client(host, port);
    const SubmitResponse r = client.submit_train(image, config, mode);
    out << "job_id=" << r.job_id << " token=" << r.token << "\n";
    return kExitOk;
  }

  TrainingOptions options;
  options.serial = mode == DeliveryMode::kBaselineSerial;
  options.cancel_above_exit = mode == DeliveryMode::kParallelOneshot;
  options.on_scale_done = [&out](const ScaleOutcome& o, const ScaleModel&) {
    out << "scale " << o.scale_index << " done ssim=" << std::fixed << std::setprecision(4) << o.exit_ssim
        << " exit=" << (o.exit ? "yes" : "no") << " wall=" << std::setprecision(1) << o.wall_seconds << "s\n"
        << std::flush;
  };
  const TrainingResult result = train_all_parallel(image, config, options);
  fs::path bundle_path = out_path.empty() ? fs::path(image_path).replace_extension(kBundleExtension) : out_path;
  if (result.bundle.available_scales() > 0) save_bundle(bundle_path.string(), result.bundle);
  fs::path telemetry = bundle_path;
  telemetry += ".telemetry.json";
  write_text(telemetry, telemetry_json(result, config));
  if (result.failure) throw *result.failure;
  out << "bundle=" << bundle_path.string() << " scales=" << result.bundle.available_scales()
      << " best_scale=" << result.bundle.manifest.best_scale << "\n";
  return kExitOk;
}

std::atomic<bool>* g_interrupted = nullptr;

void wait_for_signal() {
  static std::atomic<bool> interrupted{false};
  g_interrupted = &interrupted;
  std::signal(SIGINT, [](int) { g_interrupted->store(true); });
  std::signal(SIGTERM, [](int) { g_interrupted->store(true); });
  while (!interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

int cmd_serve(const std::string& root, const std::string& host, int port, const std::string& bundle_path,
              std::ostream& out) {
  if (!bundle_path.empty()) {
    EdgeServer edge(load_bundle(bundle_path), host, port);
    const int bound = edge.start();
    out << "edge runtime listening on " << host << ":" << bound << "\n" << std::flush;
    wait_for_signal();
    edge.stop();
    return kExitOk;
  }
  ModelServer server(ServerOptions{root, host, port});
  const int bound = server.start();
  out << "model server listening on " << host << ":" << bound << " root=" << root << "\n" << std::flush;
  wait_for_signal();
  server.stop();
  return kExitOk;
}

int cmd_fetch(const std::string& server, const std::string& job, const std::string& token,
              const fs::path& out_path, bool wait, std::ostream& out) {
  const auto [host, port] = parse_server_address(server);
  ModelClient client(host, port);
  if (wait) {
    std::string final_type;
    client.subscribe(job, token, 0, [&](const ProgressEvent& e) {
      if (e.type == "scale_ready") out << "scale " << e.scale << " ready (" << e.bytes << " bytes)\n" << std::flush;
      if (e.type == "job_done" || e.type == "job_failed") {
        final_type = e.type;
        return false;
      }
      return true;
    });
    if (final_type == "job_failed") throw Error(ErrorCode::kProtocol, "job " + job + " failed on the server");
  }
  const AssembledBundle assembled = client.assemble(job, token);
  save_bundle(out_path.string(), assembled.bundle);
  out << "bundle=" << out_path.string() << " scales=" << assembled.bundle.available_scales() << "/"
      << assembled.bundle.scale_count() << " complete=" << (assembled.complete ? "yes" : "no")
      << " refreshable=" << (assembled.refreshable ? "yes" : "no") << "\n";
  return kExitOk;
}

struct GenerateArgs {
  std::string bundle;
  std::optional<int> scale;
  std::uint64_t seed = 0;
  std::optional<int> height, width;
  std::string request_file;
  std::string inject_image;
  int inject_scale = 1;
  std::string out;
};

int cmd_generate(GenerateArgs a, std::ostream& out) {
  if (!a.request_file.empty()) {
    const auto bytes = read_file(a.request_file);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
      if (a.bundle.empty()) a.bundle = j.value("bundle", std::string{});
      if (j.contains("up_to_scale")) a.scale = j.at("up_to_scale").get<int>();
      if (j.contains("seed")) a.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("coarsest_height")) a.height = j.at("coarsest_height").get<int>();
      if (j.contains("coarsest_width")) a.width = j.at("coarsest_width").get<int>();
      if (j.contains("inject")) {
        a.inject_image = j.at("inject").at("image").get<std::string>();
        a.inject_scale = j.at("inject").value("at_scale", 1);
      }
      if (a.out.empty()) a.out = j.value("out", std::string{});
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kInvalidArgument, std::string("bad request file: ") + ex.what());
    }
  }
  if (a.bundle.empty()) throw Error(ErrorCode::kInvalidArgument, "--bundle is required");
  if (a.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  if (a.height.has_value() != a.width.has_value()) {
    throw Error(ErrorCode::kInvalidArgument, "--height and --width go together");
  }
  const TrainedBundle bundle = load_bundle(a.bundle);
  GenerationRequest request;
  request.up_to_scale = a.scale.value_or(bundle.available_scales() - 1);
  request.seed = a.seed;
  if (a.height) request.coarsest_dims = Dims{*a.height, *a.width};
  if (!a.inject_image.empty()) request.inject = Injection{load_image(a.inject_image), a.inject_scale};
  const ImageGrid image = generate(bundle, request);
  save_png(a.out, image);
  out << "wrote " << a.out << " " << image.width() << "x" << image.height() << " scale=" << request.up_to_scale
      << "\n";
  return kExitOk;
}

struct EditArgs {
  std::string bundle, kind, image, mask, out;
  std::optional<int> scale;
  std::uint64_t seed = 0;
  double factor = 2.0;
  std::optional<int> passes;
};

int cmd_edit(const EditArgs& a, std::ostream& out, std::ostream& err) {
  const TrainedBundle bundle = load_bundle(a.bundle);
  const EditKind kind = parse_edit_kind(a.kind);
  const ImageGrid input = load_image(a.image);
  auto need_mask = [&] {
    if (a.mask.empty()) throw Error(ErrorCode::kInvalidArgument, "--mask is required for " + a.kind);
    return load_mask(a.mask);
  };
  const int finest = bundle.available_scales() - 1;
  EditResult result{ImageGrid(1, 1), 0, {}};
  switch (kind) {
    case EditKind::kSuperResolution: {
      const int k = a.passes.value_or(
          std::max(1, static_cast<int>(std::lround(std::log(a.factor) / std::log(bundle.factor())))));
      result = super_resolution(bundle, input, a.factor, k, a.seed);
      break;
    }
    case EditKind::kPaint2Image:
      result = paint2image(bundle, input, a.scale.value_or(1), a.seed);
      break;
    case EditKind::kHarmonization:
      result = harmonize(bundle, input, need_mask(), a.scale.value_or(std::max(1, finest - 1)), a.seed);
      break;
    case EditKind::kEditing:
      result = edit(bundle, input, need_mask(), a.scale.value_or(std::min(2, finest)), a.seed);
      break;
  }
  for (const std::string& w : result.warnings) err << "warning: " << w << "\n";
  save_png(a.out, result.image);
  out << "wrote " << a.out << " " << result.image.width() << "x" << result.image.height()
      << " at_scale=" << result.at_scale << "\n";
  return kExitOk;
}

int cmd_profile(const std::string& bundle_path, std::optional<int> scale, std::uint64_t seed,
                const std::string& power, const std::string& trace, const std::string& sensor, int repeats,
                const std::string& out_path, std::ostream& out, std::ostream& err) {
  const TrainedBundle bundle = load_bundle(bundle_path);
  GenerationRequest request;
  request.up_to_scale = scale.value_or(bundle.available_scales() - 1);
  request.seed = seed;
  ProfileOptions options;
  options.repeats = repeats;
  if (power == "synthetic") {
    options.source = TraceSource::kSyntheticModel;
  } else if (power == "file") {
    if (trace.empty()) throw Error(ErrorCode::kInvalidArgument, "--trace is required with --power file");
    options.source = TraceSource::kFile;
    options.trace_file = trace;
  } else if (power == "sensor") {
    options.source = TraceSource::kPlatformSensor;
    options.sensor_path = sensor;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--power must be synthetic, file or sensor");
  }
  const EnergyReport report = profile_generation(bundle, request, options);
  for (const std::string& w : report.warnings) err << "warning: " << w << "\n";
  if (!out_path.empty()) write_text(out_path, report.to_json() + "\n");
  out << report.to_table();
  return kExitOk;
}

int cmd_bench(const std::string& bundle_path, int repeats, std::ostream& out) {
  TrainedBundle bundle;
  if (bundle_path.empty()) {
    bundle = untrained_bundle(compute_scale_schedule(Dims{256, 256}, 256, 25, 4.0 / 3.0), 0);
    out << "# untrained 256px bundle (pass --bundle for a trained one)\n";
  } else {
    bundle = load_bundle(bundle_path);
  }
  out << "# scale channels params blob_bytes cumulative_bytes compressed_cumulative_bytes\n";
  std::uint64_t cumulative = 0;
  for (int i = 0; i < bundle.available_scales(); ++i) {
    const ScaleEntry& e = bundle.manifest.scales[i];
    cumulative += e.bytes;
    const auto serialized = serialize_bundle(prefix_bundle(bundle, i + 1));
    out << i << ' ' << e.channels << ' ' << param_count(i) << ' ' << e.bytes << ' ' << cumulative << ' '
        << compress_bundle(serialized).size() << "\n";
  }
  GenerationRequest request;
  request.up_to_scale = bundle.available_scales() - 1;
  ProfileOptions options;
  options.repeats = repeats;
  out << "# energy (synthetic power model)\n" << profile_generation(bundle, request, options).to_table();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale single-image GAN: training, delivery, edge inference and editing", "setgan"};
  app.require_subcommand(1);

  std::string image_path, out_path, mode = "parallel_oneshot", server, write_config;
  TrainFlags flags;
  auto* train = app.add_subcommand("train", "train a bundle from one image, locally or on a server");
  train->add_option("--image", image_path, "training image (PNG/JPEG)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "bundle output path");
  train->add_option("--mode", mode, "baseline_serial | parallel_oneshot | progressive");
  train->add_option("--server", server, "submit to host:port instead of training locally ($SETGAN_SERVER)");
  train->add_option("--write-config", write_config, "write the effective config as JSON");
  flags.add_to(*train);

  std::string root = "setgan-jobs", host = "127.0.0.1", serve_bundle;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the model server, or the edge runtime with --bundle");
  serve->add_option("--root", root, "job directory");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks one)");
  serve->add_option("--bundle", serve_bundle, "serve the edge runtime for this bundle")->check(CLI::ExistingFile);

  std::string job, token;
  bool wait = false;
  auto* fetch = app.add_subcommand("fetch", "assemble a bundle from a server job");
  fetch->add_option("--server", server, "host:port ($SETGAN_SERVER)");
  fetch->add_option("--job", job, "job id")->required();
  fetch->add_option("--token", token, "job token ($SETGAN_TOKEN)");
  fetch->add_option("--out", out_path, "bundle output path")->required();
  fetch->add_flag("--wait", wait, "follow progress until the job finishes");

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "sample an image from a bundle");
  generate_cmd->add_option("--bundle", gen.bundle, "bundle file");
  generate_cmd->add_option("--scale", gen.scale, "finest scale to run (default: all available)");
  generate_cmd->add_option("--seed", gen.seed, "noise seed");
  generate_cmd->add_option("--height", gen.height, "coarsest height for arbitrary-size output");
  generate_cmd->add_option("--width", gen.width, "coarsest width for arbitrary-size output");
  generate_cmd->add_option("--inject", gen.inject_image, "image injected at --inject-scale");
  generate_cmd->add_option("--inject-scale", gen.inject_scale, "injection scale");
  generate_cmd->add_option("--request", gen.request_file, "JSON request file")->check(CLI::ExistingFile);
  generate_cmd->add_option("--out", gen.out, "PNG output path");

  EditArgs ed;
  auto* edit_cmd = app.add_subcommand("edit", "run an editing application");
  edit_cmd->add_option("--bundle", ed.bundle, "bundle file")->required()->check(CLI::ExistingFile);
  edit_cmd->add_option("--kind", ed.kind, "super_resolution | paint2image | harmonization | editing")->required();
  edit_cmd->add_option("--image", ed.image, "input image")->required()->check(CLI::ExistingFile);
  edit_cmd->add_option("--mask", ed.mask, "mask PNG (harmonization, editing)")->check(CLI::ExistingFile);
  edit_cmd->add_option("--scale", ed.scale, "injection scale");
  edit_cmd->add_option("--seed", ed.seed, "noise seed");
  edit_cmd->add_option("--factor", ed.factor, "super-resolution factor s");
  edit_cmd->add_option("--passes", ed.passes, "super-resolution passes k");
  edit_cmd->add_option("--out", ed.out, "PNG output path")->required();

  std::string profile_bundle, power = "synthetic", trace, sensor, report_path;
  std::optional<int> profile_scale;
  std::uint64_t profile_seed = 0;
  int repeats = 3;
  auto* profile = app.add_subcommand("profile", "per-scale wall time, power and normalized EDP");
  profile->add_option("--bundle", profile_bundle, "bundle file")->required()->check(CLI::ExistingFile);
  profile->add_option("--scale", profile_scale, "finest scale to profile");
  profile->add_option("--seed", profile_seed, "noise seed");
  profile->add_option("--power", power, "synthetic | file | sensor");
  profile->add_option("--trace", trace, "power trace CSV for --power file")->check(CLI::ExistingFile);
  profile->add_option("--sensor", sensor, "microwatt sensor file ($SETGAN_POWER_SENSOR)");
  profile->add_option("--repeats", repeats, "runs per scale; the fastest is kept")->check(CLI::PositiveNumber);
  profile->add_option("--out", report_path, "EnergyReport JSON path");

  std::string bench_bundle;
  auto* bench = app.add_subcommand("bench", "model size, compression and energy tables");
  bench->add_option("--bundle", bench_bundle, "bundle file (default: untrained 256px chain)");
  bench->add_option("--repeats", repeats, "runs per scale")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) out << sub->help();
      return kExitOk;
    }
    err << "error code=usage exit=" << kExitUsage << " message=" << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train) {
      return cmd_train(image_path, out_path, mode, server.empty() ? env_or("SETGAN_SERVER", "") : server,
                       write_config, flags, out);
    }
    if (*serve) return cmd_serve(root, host, port, serve_bundle, out);
    if (*fetch) {
      return cmd_fetch(server.empty() ? env_or("SETGAN_SERVER", "") : server, job,
                       token.empty() ? env_or("SETGAN_TOKEN", "") : token, out_path, wait, out);
    }
    if (*generate_cmd) return cmd_generate(gen, out);
    if (*edit_cmd) return cmd_edit(ed, out, err);
    if (*profile) {
      return cmd_profile(profile_bundle, profile_scale, profile_seed, power, trace, sensor, repeats, report_path,
                         out, err);
    }
    if (*bench) return cmd_bench(bench_bundle, repeats, out);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    err << "error code=" << to_string(e.code()) << " exit=" << code << " message=" << e.what() << "\n";
    return code;
  } catch (const fs::filesystem_error& e) {
    err << "error code=" << to_string(ErrorCode::kIo) << " exit=" << kExitIo << " message=" << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace setgan::cli
