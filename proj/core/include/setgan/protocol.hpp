#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "setgan/bundle.hpp"
#include "setgan/trainer.hpp"

namespace setgan {

enum class DeliveryMode { kBaselineSerial, kParallelOneshot, kProgressive };
std::string_view to_string(DeliveryMode mode);
DeliveryMode parse_delivery_mode(std::string_view text);

struct ProgressEvent {
  std::uint64_t id = 0;  // 1-based, dense per job
  std::string type;      // scale_ready | job_done | job_failed
  int scale = -1;
  std::uint64_t bytes = 0;
  std::string sha256;
  std::string detail;

  std::string to_json() const;
  static ProgressEvent from_json(const std::string& text);
  friend bool operator==(const ProgressEvent&, const ProgressEvent&) = default;
};

// Accepts finished scales in any order and releases them strictly as a
// growing prefix 0..k. Readers never see scale i before every scale < i.
class PrefixPublisher {
 public:
  struct Published {
    ScaleEntry entry;
    std::vector<std::uint8_t> blob;
  };

  // Returns the scales that became visible because of this completion.
  // Completing an already published scale is a no-op.
  std::vector<int> complete(int scale_index, ScaleEntry entry, std::vector<std::uint8_t> blob);
  // Makes buffered scales < limit visible regardless of order (one-shot
  // release); scales must be contiguous from the current prefix.
  std::vector<int> release_through(int last_index);
  void set_auto_release(bool enabled);

  int published_count() const;
  std::optional<Published> get(int scale_index) const;
  std::vector<ScaleEntry> published_entries() const;

 private:
  std::vector<int> drain_locked(int limit);

  mutable std::mutex mutex_;
  bool auto_release_ = true;
  std::map<int, Published> buffered_;
  std::vector<Published> published_;
};

struct ServerOptions {
  std::filesystem::path root;  // one directory per job
  std::string host = "127.0.0.1";
  int port = 0;                // 0 picks a free port
};

// HTTP front end over the training jobs:
//   POST /jobs?mode=<mode>          body: PNG/JPEG, header X-Setgan-Config: TrainConfig JSON
//   GET  /jobs/{id}/status
//   GET  /jobs/{id}/manifest
//   GET  /jobs/{id}/scales/{i}      octet-stream, X-Content-SHA256; 202 while pending
//   GET  /jobs/{id}/events          text/event-stream, resumable via Last-Event-ID
// Every /jobs/{id} route requires "Authorization: Bearer <token>".
class ModelServer {
 public:
  explicit ModelServer(ServerOptions options);
  ~ModelServer();
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Blocks until stop() from another thread.
  void listen_blocking();
  void stop();
  int port() const;

  // Waits for a job's training thread to finish (tests and shutdown).
  void wait_for_job(const std::string& job_id);

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& config);

struct SubmitResponse {
  std::string job_id;
  std::string token;
};

struct ScaleStatus {
  int index = 0;
  ScaleState state = ScaleState::kPending;
};

struct JobStatus {
  std::string job_id;
  DeliveryMode mode = DeliveryMode::kProgressive;
  std::string state;  // training | done | failed
  int published = 0;
  int best_scale = -1;
  std::vector<ScaleStatus> scales;
};

struct AssembledBundle {
  TrainedBundle bundle;
  bool complete = false;
  bool refreshable = false;  // more scales may still arrive
};

class ModelClient {
 public:
  ModelClient(std::string host, int port);

  SubmitResponse submit_train(const ImageGrid& image, const TrainConfig& config,
                              DeliveryMode mode);
  JobStatus get_status(const std::string& job_id, const std::string& token);
  Manifest get_manifest(const std::string& job_id, const std::string& token);
  // nullopt while the scale is pending; verifies the content hash.
  std::optional<std::vector<std::uint8_t>> get_scale(const std::string& job_id,
                                                     const std::string& token, int scale_index);

  // Streams events after `last_event_id`; the callback returns false to
  // disconnect. Returns when the stream ends or is abandoned.
  void subscribe(const std::string& job_id, const std::string& token,
                 std::uint64_t last_event_id,
                 const std::function<bool(const ProgressEvent&)>& on_event);

  // Builds the published prefix. Throws kNotReady when nothing is published.
  AssembledBundle assemble(const std::string& job_id, const std::string& token);
  // Extends an earlier assembly with newly published scales; earlier blobs
  // are kept as-is.
  void refresh(AssembledBundle& assembled, const std::string& job_id, const std::string& token);

 private:
  std::string host_;
  int port_;
};

// Local edge runtime used by the editing front end:
//   GET  /bundle      manifest JSON of the loaded bundle
//   POST /generate    JSON {up_to_scale, seed[, coarsest_height, coarsest_width]} -> PNG
//   POST /edit        multipart {kind, image, mask?, scale, seed, factor?, passes?} -> PNG
// Responses carry X-Setgan-Scale and X-Setgan-Warnings (JSON array).
class EdgeServer {
 public:
  EdgeServer(TrainedBundle bundle, std::string host = "127.0.0.1", int port = 0);
  ~EdgeServer();
  EdgeServer(const EdgeServer&) = delete;
  EdgeServer& operator=(const EdgeServer&) = delete;

  int start();
  void listen_blocking();
  void stop();
  int port() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

// Parses "host:port" or "http://host:port".
std::pair<std::string, int> parse_server_address(const std::string& address);

}  // namespace setgan
