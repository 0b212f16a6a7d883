#include "setgan/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "setgan/editor_apps.hpp"
#include "setgan/error.hpp"
#include "setgan/image_io.hpp"
#include "setgan/inference.hpp"

namespace setgan {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string random_hex(std::size_t bytes) {
  static thread_local std::random_device device;
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bytes; ++i) {
    const unsigned v = device() & 0xffu;
    out += digits[v >> 4];
    out += digits[v & 0xf];
  }
  return out;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
    case ErrorCode::kScaleUnavailable: return 404;
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kNotReady: return 202;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

ErrorCode code_for_status(int status) {
  switch (status) {
    case 400: return ErrorCode::kInvalidArgument;
    case 401: return ErrorCode::kUnauthorized;
    case 404: return ErrorCode::kNotFound;
    default: return ErrorCode::kProtocol;
  }
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  reply_error(res, http_status(e.code()), to_string(e.code()), e.what());
}

void write_atomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  fs::rename(tmp, path);
}

void write_text_atomically(const fs::path& path, const std::string& text) {
  write_atomically(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

json entry_to_json(const ScaleEntry& e) {
  return {{"index", e.index},           {"channels", e.channels}, {"noise_amplitude", e.noise_amplitude},
          {"rec_seed", e.rec_seed},     {"exit_ssim", e.exit_ssim}, {"offset", e.offset},
          {"bytes", e.bytes},           {"sha256", e.sha256}};
}

ScaleEntry entry_from_json(const json& j) {
  ScaleEntry e;
  e.index = j.at("index").get<int>();
  e.channels = j.at("channels").get<int>();
  e.noise_amplitude = j.at("noise_amplitude").get<double>();
  e.rec_seed = j.at("rec_seed").get<std::uint64_t>();
  e.exit_ssim = j.at("exit_ssim").get<double>();
  e.offset = j.at("offset").get<std::uint64_t>();
  e.bytes = j.at("bytes").get<std::uint64_t>();
  e.sha256 = j.at("sha256").get<std::string>();
  return e;
}

std::string format_sse(const ProgressEvent& e) {
  std::ostringstream out;
  out << "id: " << e.id << "\nevent: " << e.type << "\ndata: " << e.to_json() << "\n\n";
  return out.str();
}

}  // namespace

std::string_view to_string(DeliveryMode mode) {
  switch (mode) {
    case DeliveryMode::kBaselineSerial: return "baseline_serial";
    case DeliveryMode::kParallelOneshot: return "parallel_oneshot";
    case DeliveryMode::kProgressive: return "progressive";
  }
  return "unknown";
}

DeliveryMode parse_delivery_mode(std::string_view text) {
  if (text == "baseline_serial" || text == "baseline") return DeliveryMode::kBaselineSerial;
  if (text == "parallel_oneshot" || text == "oneshot") return DeliveryMode::kParallelOneshot;
  if (text == "progressive") return DeliveryMode::kProgressive;
  throw Error(ErrorCode::kInvalidArgument, "unknown delivery mode: " + std::string(text));
}

std::string ProgressEvent::to_json() const {
  return json{{"id", id}, {"type", type}, {"scale", scale},
              {"bytes", bytes}, {"sha256", sha256}, {"detail", detail}}
      .dump();
}

ProgressEvent ProgressEvent::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ProgressEvent e;
    e.id = j.at("id").get<std::uint64_t>();
    e.type = j.at("type").get<std::string>();
    e.scale = j.value("scale", -1);
    e.bytes = j.value("bytes", std::uint64_t{0});
    e.sha256 = j.value("sha256", std::string{});
    e.detail = j.value("detail", std::string{});
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kProtocol, std::string("bad progress event: ") + ex.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<int> PrefixPublisher::complete(int scale_index, ScaleEntry entry,
                                           std::vector<std::uint8_t> blob) {
  std::lock_guard lock(mutex_);
  if (scale_index < static_cast<int>(published_.size())) return {};
  buffered_[scale_index] = Published{std::move(entry), std::move(blob)};
  if (!auto_release_) return {};
  return drain_locked(std::numeric_limits<int>::max());
}

std::vector<int> PrefixPublisher::release_through(int last_index) {
  std::lock_guard lock(mutex_);
  return drain_locked(last_index);
}

void PrefixPublisher::set_auto_release(bool enabled) {
  std::lock_guard lock(mutex_);
  auto_release_ = enabled;
}

std::vector<int> PrefixPublisher::drain_locked(int limit) {
  std::vector<int> released;
  for (;;) {
    const int next = static_cast<int>(published_.size());
    if (next > limit) break;
    auto it = buffered_.find(next);
    if (it == buffered_.end()) break;
    Published p = std::move(it->second);
    buffered_.erase(it);
    p.entry.index = next;
    p.entry.offset = published_.empty() ? 0 : published_.back().entry.offset + published_.back().entry.bytes;
    p.entry.bytes = p.blob.size();
    p.entry.sha256 = sha256_hex(p.blob);
    published_.push_back(std::move(p));
    released.push_back(next);
  }
  return released;
}

int PrefixPublisher::published_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(published_.size());
}

std::optional<PrefixPublisher::Published> PrefixPublisher::get(int scale_index) const {
  std::lock_guard lock(mutex_);
  if (scale_index < 0 || scale_index >= static_cast<int>(published_.size())) return std::nullopt;
  return published_[scale_index];
}

std::vector<ScaleEntry> PrefixPublisher::published_entries() const {
  std::lock_guard lock(mutex_);
  std::vector<ScaleEntry> out;
  out.reserve(published_.size());
  for (const Published& p : published_) out.push_back(p.entry);
  return out;
}

// ---------------------------------------------------------------------------

std::string config_to_json(const TrainConfig& c) {
  return json{{"iterations_per_scale", c.iterations_per_scale},
              {"g_steps", c.g_steps},
              {"d_steps", c.d_steps},
              {"learning_rate", c.learning_rate},
              {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_iteration", c.lr_decay_iteration},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"alpha_rec", c.alpha_rec},
              {"gp_weight", c.gp_weight},
              {"ssim_threshold", c.ssim_threshold},
              {"worker_count", c.worker_count},
              {"seed", c.seed},
              {"max_dim", c.max_dim},
              {"min_dim", c.min_dim},
              {"scale_factor", c.scale_factor}}
      .dump();
}

TrainConfig config_from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config is not valid JSON: ") + ex.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  const TrainConfig defaults;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "iterations_per_scale") c.iterations_per_scale = value.get<int>();
      else if (key == "g_steps") c.g_steps = value.get<int>();
      else if (key == "d_steps") c.d_steps = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "lr_decay_factor") c.lr_decay_factor = value.get<double>();
      else if (key == "lr_decay_iteration") c.lr_decay_iteration = value.get<int>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "alpha_rec") c.alpha_rec = value.get<double>();
      else if (key == "gp_weight") c.gp_weight = value.get<double>();
      else if (key == "ssim_threshold") c.ssim_threshold = value.get<double>();
      else if (key == "worker_count") c.worker_count = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "max_dim") c.max_dim = value.get<int>();
      else if (key == "min_dim") c.min_dim = value.get<int>();
      else if (key == "scale_factor") c.scale_factor = value.get<double>();
      else throw Error(ErrorCode::kInvalidArgument, "unknown config key: " + key);
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config value: ") + ex.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

struct Job {
  std::string id;
  std::string token;
  DeliveryMode mode = DeliveryMode::kProgressive;
  TrainConfig config;
  fs::path dir;
  ImageGrid image{1, 1};
  Manifest base;  // manifest fields known before training finishes

  PrefixPublisher publisher;
  mutable std::mutex mutex;
  std::condition_variable changed;
  std::vector<ProgressEvent> events;
  std::vector<ScaleState> states;
  std::string state = "training";
  std::optional<Manifest> final_manifest;
  std::thread worker;

  bool finished() const { return state != "training"; }
};

}  // namespace

class ModelServer::Impl {
 public:
  explicit Impl(ServerOptions options) : options_(std::move(options)) {
    fs::create_directories(options_.root);
    restore_jobs();
    install_routes();
  }

  ~Impl() { stop(); }

  int start() {
    bind();
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void listen_blocking() {
    bind();
    server_.listen_after_bind();
  }

  void stop() {
    stopping_ = true;
    {
      std::lock_guard lock(jobs_mutex_);
      for (auto& [id, job] : jobs_) job->changed.notify_all();
    }
    server_.stop();
    if (listener_.joinable()) listener_.join();
    std::vector<std::shared_ptr<Job>> jobs;
    {
      std::lock_guard lock(jobs_mutex_);
      for (auto& [id, job] : jobs_) jobs.push_back(job);
    }
    for (auto& job : jobs) {
      if (job->worker.joinable()) job->worker.join();
    }
  }

  int port() const { return port_; }

  void wait_for_job(const std::string& id) {
    auto job = find(id);
    if (!job) throw Error(ErrorCode::kNotFound, "unknown job " + id);
    std::unique_lock lock(job->mutex);
    job->changed.wait(lock, [&] { return job->finished() || stopping_.load(); });
    lock.unlock();
    if (job->worker.joinable() && job->worker.get_id() != std::this_thread::get_id()) {
      std::lock_guard join_lock(join_mutex_);
      if (job->worker.joinable()) job->worker.join();
    }
  }

 private:
  void bind() {
    if (port_ > 0) return;
    if (options_.port == 0) {
      port_ = server_.bind_to_any_port(options_.host);
    } else {
      port_ = server_.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) throw Error(ErrorCode::kIo, "cannot bind " + options_.host);
  }

  std::shared_ptr<Job> find(const std::string& id) {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second;
  }

  // Resolves the job for a request, checking the bearer token.
  std::shared_ptr<Job> authorize(const httplib::Request& req, httplib::Response& res) {
    auto job = find(req.path_params.at("id"));
    if (!job) {
      reply_error(res, 404, to_string(ErrorCode::kNotFound), "unknown job");
      return nullptr;
    }
    if (req.get_header_value("Authorization") != "Bearer " + job->token) {
      reply_error(res, 401, to_string(ErrorCode::kUnauthorized), "missing or wrong job token");
      return nullptr;
    }
    return job;
  }

  void install_routes() {
    server_.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const DeliveryMode mode =
            parse_delivery_mode(req.has_param("mode") ? req.get_param_value("mode") : "progressive");
        const std::string config_text = req.get_header_value("X-Setgan-Config");
        const TrainConfig config = config_text.empty() ? TrainConfig{} : config_from_json(config_text);
        config.validate();
        const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
        ImageGrid image = decode_image(std::span(data, req.body.size()));
        auto job = create_job(std::move(image), config, mode);
        res.status = 201;
        res.set_content(json{{"job_id", job->id}, {"token", job->token}}.dump(), "application/json");
      } catch (const Error& e) {
        reply_error(res, e);
      }
    });

    server_.Get("/jobs/:id/status", [this](const httplib::Request& req, httplib::Response& res) {
      auto job = authorize(req, res);
      if (!job) return;
      json scales = json::array();
      std::lock_guard lock(job->mutex);
      for (std::size_t i = 0; i < job->states.size(); ++i) {
        scales.push_back({{"index", i}, {"state", std::string(to_string(job->states[i]))}});
      }
      json j = {{"job_id", job->id},
                {"mode", std::string(to_string(job->mode))},
                {"state", job->state},
                {"published", job->publisher.published_count()},
                {"best_scale", job->final_manifest ? job->final_manifest->best_scale : -1},
                {"scales", scales}};
      res.set_content(j.dump(), "application/json");
    });

    server_.Get("/jobs/:id/manifest", [this](const httplib::Request& req, httplib::Response& res) {
      auto job = authorize(req, res);
      if (!job) return;
      res.set_content(manifest_to_json(current_manifest(*job)), "application/json");
    });

    server_.Get("/jobs/:id/scales/:index", [this](const httplib::Request& req, httplib::Response& res) {
      auto job = authorize(req, res);
      if (!job) return;
      int index = -1;
      try {
        index = std::stoi(req.path_params.at("index"));
      } catch (const std::exception&) {
        reply_error(res, 400, to_string(ErrorCode::kInvalidArgument), "bad scale index");
        return;
      }
      if (auto published = job->publisher.get(index)) {
        res.set_header("X-Content-SHA256", published->entry.sha256);
        res.set_content(std::string(published->blob.begin(), published->blob.end()),
                        "application/octet-stream");
        return;
      }
      bool pending = false;
      {
        std::lock_guard lock(job->mutex);
        pending = !job->finished() && index >= 0 && index < job->base.schedule.scale_count;
      }
      if (pending) {
        res.status = 202;
        res.set_content(json{{"status", "pending"}, {"scale", index}}.dump(), "application/json");
      } else {
        reply_error(res, 404, to_string(ErrorCode::kScaleUnavailable), "scale not published");
      }
    });

    server_.Get("/jobs/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      auto job = authorize(req, res);
      if (!job) return;
      std::uint64_t after = 0;
      try {
        if (req.has_header("Last-Event-ID")) after = std::stoull(req.get_header_value("Last-Event-ID"));
        else if (req.has_param("last_event_id")) after = std::stoull(req.get_param_value("last_event_id"));
      } catch (const std::exception&) {
        reply_error(res, 400, to_string(ErrorCode::kInvalidArgument), "bad Last-Event-ID");
        return;
      }
      auto cursor = std::make_shared<std::uint64_t>(after);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, job, cursor](std::size_t, httplib::DataSink& sink) {
            std::string out;
            bool finished = false;
            {
              std::unique_lock lock(job->mutex);
              job->changed.wait_for(lock, std::chrono::seconds(2), [&] {
                return job->events.size() > *cursor || job->finished() || stopping_.load();
              });
              for (std::size_t k = *cursor; k < job->events.size(); ++k) out += format_sse(job->events[k]);
              *cursor = job->events.size();
              finished = job->finished() || stopping_.load();
            }
            if (out.empty() && !finished) out = ": keepalive\n\n";
            if (!out.empty() && !sink.write(out.data(), out.size())) return false;
            if (finished) sink.done();
            return true;
          });
    });
  }

  Manifest current_manifest(const Job& job) {
    {
      std::lock_guard lock(job.mutex);
      if (job.final_manifest) return *job.final_manifest;
    }
    Manifest m = job.base;
    m.scales = job.publisher.published_entries();
    return m;
  }

  std::shared_ptr<Job> create_job(ImageGrid image, const TrainConfig& config, DeliveryMode mode) {
    auto job = std::make_shared<Job>();
    job->id = random_hex(8);
    job->token = random_hex(16);
    job->mode = mode;
    job->config = config;
    job->dir = options_.root / job->id;
    job->image = std::move(image);
    init_base(*job);
    fs::create_directories(job->dir);
    save_png(job->dir / "image.png", job->image);
    write_text_atomically(job->dir / "job.json",
                          json{{"id", job->id},
                               {"token", job->token},
                               {"mode", std::string(to_string(mode))},
                               {"config", json::parse(config_to_json(config))}}
                              .dump(2));
    {
      std::lock_guard lock(jobs_mutex_);
      jobs_[job->id] = job;
    }
    launch(job);
    return job;
  }

  void init_base(Job& job) {
    const ImagePyramid pyramid = prepare_pyramid(job.image, job.config);
    job.base.source_image_hash = image_hash(job.image);
    job.base.job_id = training_id(job.base.source_image_hash, job.config);
    job.base.schedule = pyramid.schedule;
    job.base.best_scale = -1;
    job.base.threshold = job.config.ssim_threshold;
    job.base.seed = job.config.seed;
    job.states.assign(pyramid.schedule.scale_count, ScaleState::kPending);
  }

  void append_event(Job& job, ProgressEvent event) {
    {
      std::lock_guard lock(job.mutex);
      event.id = job.events.size() + 1;
      std::ofstream log(job.dir / "events.jsonl", std::ios::app);
      log << event.to_json() << '\n';
      log.flush();
      job.events.push_back(std::move(event));
    }
    job.changed.notify_all();
  }

  // Writes freshly released scales to disk, then announces them.
  void announce(Job& job, const std::vector<int>& released) {
    for (int i : released) {
      auto published = job.publisher.get(i);
      const std::string stem = "scale_" + std::to_string(i);
      write_atomically(job.dir / (stem + ".bin"), published->blob);
      write_text_atomically(job.dir / (stem + ".json"), entry_to_json(published->entry).dump());
      ProgressEvent e;
      e.type = "scale_ready";
      e.scale = i;
      e.bytes = published->entry.bytes;
      e.sha256 = published->entry.sha256;
      append_event(job, std::move(e));
    }
  }

  void launch(const std::shared_ptr<Job>& job) {
    job->publisher.set_auto_release(job->mode == DeliveryMode::kProgressive);
    job->worker = std::thread([this, job] { run(job); });
  }

  void run(const std::shared_ptr<Job>& job) {
    TrainingOptions options;
    options.stop = &stopping_;
    options.serial = job->mode == DeliveryMode::kBaselineSerial;
    options.cancel_above_exit = job->mode == DeliveryMode::kParallelOneshot;
    options.on_state = [job](int i, ScaleState s) {
      std::lock_guard lock(job->mutex);
      job->states[i] = s;
    };
    if (job->mode == DeliveryMode::kProgressive) {
      options.on_scale_done = [this, job](const ScaleOutcome& outcome, const ScaleModel& model) {
        ScaleEntry entry;
        entry.index = outcome.scale_index;
        entry.channels = channels_for_scale(outcome.scale_index);
        entry.noise_amplitude = model.noise_amplitude;
        entry.rec_seed = model.fixed_rec_seed;
        entry.exit_ssim = outcome.exit_ssim;
        announce(*job, job->publisher.complete(outcome.scale_index, entry, encode_scale_blob(model)));
      };
    }

    TrainingResult result;
    std::optional<Error> error;
    try {
      result = train_all_parallel(job->image, job->config, options);
      if (result.failure) error = result.failure;
    } catch (const Error& e) {
      error = e;
    } catch (const std::exception& e) {
      error = Error(ErrorCode::kProtocol, e.what());
    }
    if (stopping_) return;  // resumed on the next start

    if (!error) {
      const TrainedBundle& bundle = result.bundle;
      for (int i = 0; i < bundle.available_scales(); ++i) {
        job->publisher.complete(i, bundle.manifest.scales[i], encode_scale_blob(bundle.scales[i]));
      }
      announce(*job, job->publisher.release_through(bundle.available_scales() - 1));
      write_text_atomically(job->dir / "manifest.json", manifest_to_json(bundle.manifest));
      {
        std::lock_guard lock(job->mutex);
        job->final_manifest = bundle.manifest;
      }
      ProgressEvent done;
      done.type = "job_done";
      done.scale = bundle.manifest.best_scale;
      done.detail = "best_scale=" + std::to_string(bundle.manifest.best_scale);
      append_event(*job, std::move(done));
    } else {
      ProgressEvent failed;
      failed.type = "job_failed";
      failed.detail = std::string(to_string(error->code())) + ": " + error->what();
      append_event(*job, std::move(failed));
    }
    {
      std::lock_guard lock(job->mutex);
      job->state = error ? "failed" : "done";
    }
    job->changed.notify_all();
  }

  void restore_jobs() {
    for (const auto& dir : fs::directory_iterator(options_.root)) {
      if (!dir.is_directory() || !fs::exists(dir.path() / "job.json")) continue;
      try {
        restore(dir.path());
      } catch (const std::exception&) {
        // Unreadable job directories are skipped; they stay on disk for inspection.
      }
    }
  }

  void restore(const fs::path& dir) {
    const json meta = json::parse(read_text(dir / "job.json"));
    auto job = std::make_shared<Job>();
    job->id = meta.at("id").get<std::string>();
    job->token = meta.at("token").get<std::string>();
    job->mode = parse_delivery_mode(meta.at("mode").get<std::string>());
    job->config = config_from_json(meta.at("config").dump());
    job->dir = dir;
    job->image = load_image(dir / "image.png");
    init_base(*job);

    if (fs::exists(dir / "events.jsonl")) {
      std::ifstream in(dir / "events.jsonl");
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        ProgressEvent e = ProgressEvent::from_json(line);
        if (e.id != job->events.size() + 1) break;
        if (e.type == "scale_ready") {
          const std::string stem = "scale_" + std::to_string(e.scale);
          const auto blob = read_file(dir / (stem + ".bin"));
          if (sha256_hex(blob) != e.sha256) throw Error(ErrorCode::kHashMismatch, "stored scale corrupted");
          const ScaleEntry entry = entry_from_json(json::parse(read_text(dir / (stem + ".json"))));
          job->publisher.set_auto_release(true);
          job->publisher.complete(e.scale, entry, blob);
        } else if (e.type == "job_done") {
          job->state = "done";
        } else if (e.type == "job_failed") {
          job->state = "failed";
        }
        job->events.push_back(std::move(e));
      }
    }
    if (job->state == "done" && fs::exists(dir / "manifest.json")) {
      job->final_manifest = manifest_from_json(read_text(dir / "manifest.json"));
      for (auto& s : job->states) s = ScaleState::kDone;
    }
    {
      std::lock_guard lock(jobs_mutex_);
      jobs_[job->id] = job;
    }
    // Interrupted jobs retrain deterministically; published scales are kept.
    if (!job->finished()) launch(job);
  }

  ServerOptions options_;
  httplib::Server server_;
  std::thread listener_;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::mutex jobs_mutex_;
  std::mutex join_mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
};

ModelServer::ModelServer(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
ModelServer::~ModelServer() = default;
int ModelServer::start() { return impl_->start(); }
void ModelServer::listen_blocking() { impl_->listen_blocking(); }
void ModelServer::stop() { impl_->stop(); }
int ModelServer::port() const { return impl_->port(); }
void ModelServer::wait_for_job(const std::string& job_id) { impl_->wait_for_job(job_id); }

// ---------------------------------------------------------------------------

namespace {

httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

[[noreturn]] void throw_for(const httplib::Result& result, const std::string& what) {
  if (!result) {
    throw Error(ErrorCode::kProtocol, what + ": " + httplib::to_string(result.error()));
  }
  std::string message = result->body;
  try {
    message = json::parse(result->body).value("message", result->body);
  } catch (const json::exception&) {
  }
  throw Error(code_for_status(result->status),
              what + " failed with HTTP " + std::to_string(result->status) + ": " + message);
}

json parse_body(const httplib::Result& result, const std::string& what) {
  try {
    return json::parse(result->body);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kProtocol, what + ": malformed response: " + ex.what());
  }
}

ScaleState parse_scale_state(const std::string& s) {
  if (s == "pending") return ScaleState::kPending;
  if (s == "training") return ScaleState::kTraining;
  if (s == "done") return ScaleState::kDone;
  if (s == "cancelled") return ScaleState::kCancelled;
  if (s == "failed") return ScaleState::kFailed;
  throw Error(ErrorCode::kProtocol, "unknown scale state " + s);
}

}  // namespace

ModelClient::ModelClient(std::string host, int port) : host_(std::move(host)), port_(port) {}

SubmitResponse ModelClient::submit_train(const ImageGrid& image, const TrainConfig& config,
                                         DeliveryMode mode) {
  httplib::Client client(host_, port_);
  const auto png = encode_png(image);
  httplib::Headers headers = {{"X-Setgan-Config", config_to_json(config)}};
  auto result = client.Post("/jobs?mode=" + std::string(to_string(mode)), headers,
                            std::string(png.begin(), png.end()), "image/png");
  if (!result || result->status != 201) throw_for(result, "submit");
  const json j = parse_body(result, "submit");
  return {j.at("job_id").get<std::string>(), j.at("token").get<std::string>()};
}

JobStatus ModelClient::get_status(const std::string& job_id, const std::string& token) {
  httplib::Client client(host_, port_);
  auto result = client.Get("/jobs/" + job_id + "/status", auth(token));
  if (!result || result->status != 200) throw_for(result, "status");
  const json j = parse_body(result, "status");
  JobStatus status;
  status.job_id = j.at("job_id").get<std::string>();
  status.mode = parse_delivery_mode(j.at("mode").get<std::string>());
  status.state = j.at("state").get<std::string>();
  status.published = j.at("published").get<int>();
  status.best_scale = j.at("best_scale").get<int>();
  for (const json& s : j.at("scales")) {
    status.scales.push_back({s.at("index").get<int>(), parse_scale_state(s.at("state").get<std::string>())});
  }
  return status;
}

Manifest ModelClient::get_manifest(const std::string& job_id, const std::string& token) {
  httplib::Client client(host_, port_);
  auto result = client.Get("/jobs/" + job_id + "/manifest", auth(token));
  if (!result || result->status != 200) throw_for(result, "manifest");
  return manifest_from_json(result->body);
}

std::optional<std::vector<std::uint8_t>> ModelClient::get_scale(const std::string& job_id,
                                                                const std::string& token,
                                                                int scale_index) {
  httplib::Client client(host_, port_);
  auto result = client.Get("/jobs/" + job_id + "/scales/" + std::to_string(scale_index), auth(token));
  if (result && result->status == 202) return std::nullopt;
  if (!result || result->status != 200) throw_for(result, "scale " + std::to_string(scale_index));
  std::vector<std::uint8_t> blob(result->body.begin(), result->body.end());
  if (sha256_hex(blob) != result->get_header_value("X-Content-SHA256")) {
    throw Error(ErrorCode::kHashMismatch, "scale " + std::to_string(scale_index) + " failed its hash check");
  }
  return blob;
}

void ModelClient::subscribe(const std::string& job_id, const std::string& token,
                            std::uint64_t last_event_id,
                            const std::function<bool(const ProgressEvent&)>& on_event) {
  httplib::Client client(host_, port_);
  client.set_read_timeout(std::chrono::minutes(10));
  httplib::Headers headers = auth(token);
  headers.emplace("Last-Event-ID", std::to_string(last_event_id));
  headers.emplace("Accept", "text/event-stream");

  std::string buffer;
  bool stopped = false;
  std::optional<Error> failure;
  int status = 0;
  auto result = client.Get(
      "/jobs/" + job_id + "/events", headers,
      [&](const httplib::Response& response) {
        status = response.status;
        return true;
      },
      [&](const char* data, std::size_t size) {
        if (status != 200) {
          buffer.append(data, size);
          return true;
        }
        buffer.append(data, size);
        for (auto end = buffer.find("\n\n"); end != std::string::npos; end = buffer.find("\n\n")) {
          const std::string block = buffer.substr(0, end);
          buffer.erase(0, end + 2);
          std::istringstream lines(block);
          std::string line;
          std::string payload;
          while (std::getline(lines, line)) {
            if (line.rfind("data: ", 0) == 0) payload += line.substr(6);
          }
          if (payload.empty()) continue;
          try {
            if (!on_event(ProgressEvent::from_json(payload))) {
              stopped = true;
              return false;
            }
          } catch (const Error& e) {
            failure = e;
            return false;
          }
        }
        return true;
      });
  if (failure) throw *failure;
  if (stopped) return;
  if (status != 0 && status != 200) {
    std::string message = buffer;
    try {
      message = json::parse(buffer).value("message", buffer);
    } catch (const json::exception&) {
    }
    throw Error(code_for_status(status), "events failed with HTTP " + std::to_string(status) + ": " + message);
  }
  if (!result) throw Error(ErrorCode::kProtocol, "events: " + httplib::to_string(result.error()));
}

AssembledBundle ModelClient::assemble(const std::string& job_id, const std::string& token) {
  AssembledBundle assembled;
  refresh(assembled, job_id, token);
  if (assembled.bundle.scales.empty()) {
    throw Error(ErrorCode::kNotReady, "no scales published yet for job " + job_id);
  }
  return assembled;
}

void ModelClient::refresh(AssembledBundle& assembled, const std::string& job_id,
                          const std::string& token) {
  const JobStatus status = get_status(job_id, token);
  const Manifest manifest = get_manifest(job_id, token);
  TrainedBundle& bundle = assembled.bundle;
  const std::size_t have = bundle.scales.size();
  if (manifest.scales.size() < have) {
    throw Error(ErrorCode::kProtocol, "server manifest shrank between refreshes");
  }
  for (std::size_t i = 0; i < have; ++i) {
    if (manifest.scales[i].sha256 != bundle.manifest.scales[i].sha256) {
      throw Error(ErrorCode::kHashMismatch, "published scale " + std::to_string(i) + " changed");
    }
  }
  std::vector<ScaleModel> added;
  for (std::size_t i = have; i < manifest.scales.size(); ++i) {
    const ScaleEntry& entry = manifest.scales[i];
    auto blob = get_scale(job_id, token, static_cast<int>(i));
    if (!blob) throw Error(ErrorCode::kProtocol, "manifest lists an unpublished scale");
    if (sha256_hex(*blob) != entry.sha256) {
      throw Error(ErrorCode::kHashMismatch, "scale " + std::to_string(i) + " does not match the manifest");
    }
    added.push_back(decode_scale_blob(static_cast<int>(i), *blob, entry.noise_amplitude, entry.rec_seed));
  }
  for (auto& m : added) bundle.scales.push_back(std::move(m));
  bundle.manifest = manifest;
  assembled.complete = status.state != "training";
  assembled.refreshable = status.state == "training" &&
                          static_cast<int>(bundle.scales.size()) < manifest.schedule.scale_count;
}

// ---------------------------------------------------------------------------

class EdgeServer::Impl {
 public:
  Impl(TrainedBundle bundle, std::string host, int port)
      : bundle_(std::move(bundle)), host_(std::move(host)), requested_port_(port) {
    install_routes();
  }
  ~Impl() { stop(); }

  int start() {
    bind();
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void listen_blocking() {
    bind();
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (listener_.joinable()) listener_.join();
  }

  int port() const { return port_; }

 private:
  void bind() {
    if (port_ > 0) return;
    if (requested_port_ == 0) {
      port_ = server_.bind_to_any_port(host_);
    } else {
      port_ = server_.bind_to_port(host_, requested_port_) ? requested_port_ : -1;
    }
    if (port_ <= 0) throw Error(ErrorCode::kIo, "cannot bind " + host_);
  }

  static void reply_png(httplib::Response& res, const ImageGrid& image, int scale,
                        const std::vector<std::string>& warnings) {
    const auto png = encode_png(image);
    res.set_header("X-Setgan-Scale", std::to_string(scale));
    res.set_header("X-Setgan-Warnings", json(warnings).dump());
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  static ImageGrid file_image(const httplib::Request& req, const std::string& name) {
    if (!req.has_file(name)) throw Error(ErrorCode::kInvalidArgument, "missing form field " + name);
    const std::string& content = req.get_file_value(name).content;
    return decode_image(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
  }

  static std::string field(const httplib::Request& req, const std::string& name, const std::string& fallback) {
    return req.has_file(name) ? req.get_file_value(name).content : fallback;
  }

  void install_routes() {
    server_.Get("/bundle", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(manifest_to_json(bundle_.manifest), "application/json");
    });

    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const json j = json::parse(req.body);
        GenerationRequest request;
        request.up_to_scale = j.value("up_to_scale", bundle_.available_scales() - 1);
        request.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("coarsest_height") || j.contains("coarsest_width")) {
          request.coarsest_dims = Dims{j.at("coarsest_height").get<int>(), j.at("coarsest_width").get<int>()};
        }
        std::lock_guard lock(mutex_);
        reply_png(res, generate(bundle_, request), request.up_to_scale, {});
      } catch (const json::exception& e) {
        reply_error(res, 400, to_string(ErrorCode::kInvalidArgument), e.what());
      } catch (const Error& e) {
        reply_error(res, e);
      }
    });

    server_.Post("/edit", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const EditKind kind = parse_edit_kind(field(req, "kind", ""));
        const std::uint64_t seed = std::stoull(field(req, "seed", "0"));
        const ImageGrid image = file_image(req, "image");
        std::lock_guard lock(mutex_);
        EditResult result{ImageGrid(1, 1), 0, {}};
        switch (kind) {
          case EditKind::kSuperResolution: {
            const double factor = std::stod(field(req, "factor", "2"));
            const int passes = std::stoi(field(req, "passes", "0"));
            const int k = passes > 0 ? passes
                                     : std::max(1, static_cast<int>(std::lround(std::log(factor) /
                                                                                std::log(bundle_.factor()))));
            result = super_resolution(bundle_, image, factor, k, seed);
            break;
          }
          case EditKind::kPaint2Image:
            result = paint2image(bundle_, image, std::stoi(field(req, "scale", "1")), seed);
            break;
          case EditKind::kHarmonization:
          case EditKind::kEditing: {
            if (!req.has_file("mask")) throw Error(ErrorCode::kInvalidArgument, "missing form field mask");
            const std::string& content = req.get_file_value("mask").content;
            const Mask mask =
                decode_mask(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
            const int default_scale = kind == EditKind::kHarmonization
                                          ? std::max(1, bundle_.available_scales() - 2)
                                          : std::min(2, bundle_.available_scales() - 1);
            const int scale = std::stoi(field(req, "scale", std::to_string(default_scale)));
            result = kind == EditKind::kHarmonization ? harmonize(bundle_, image, mask, scale, seed)
                                                      : edit(bundle_, image, mask, scale, seed);
            break;
          }
        }
        reply_png(res, result.image, result.at_scale, result.warnings);
      } catch (const Error& e) {
        reply_error(res, e);
      } catch (const std::logic_error& e) {
        reply_error(res, 400, to_string(ErrorCode::kInvalidArgument), e.what());
      }
    });
  }

  TrainedBundle bundle_;
  std::string host_;
  int requested_port_ = 0;
  int port_ = -1;
  std::mutex mutex_;
  httplib::Server server_;
  std::thread listener_;
};

EdgeServer::EdgeServer(TrainedBundle bundle, std::string host, int port)
    : impl_(std::make_unique<Impl>(std::move(bundle), std::move(host), port)) {}
EdgeServer::~EdgeServer() = default;
int EdgeServer::start() { return impl_->start(); }
void EdgeServer::listen_blocking() { impl_->listen_blocking(); }
void EdgeServer::stop() { impl_->stop(); }
int EdgeServer::port() const { return impl_->port(); }

std::pair<std::string, int> parse_server_address(const std::string& address) {
  std::string rest = address;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "server address must be host:port, got '" + address + "'");
  }
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(rest.substr(colon + 1), &used);
    if (used != rest.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bad port in server address '" + address + "'");
  }
  if (port <= 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
  return {rest.substr(0, colon), port};
}

}  // namespace setgan
