#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "setgan/gan_models.hpp"
#include "setgan/pyramid.hpp"

namespace setgan {

inline constexpr std::uint32_t kBundleFormatVersion = 1;
inline constexpr char kBundleMagic[8] = {'S', 'E', 'T', 'G', 'A', 'N', 'B', '\0'};
inline constexpr const char* kBundleExtension = ".sgb";

struct ScaleEntry {
  int index = 0;
  int channels = 0;
  double noise_amplitude = 0.0;
  std::uint64_t rec_seed = 0;
  double exit_ssim = 0.0;
  std::uint64_t offset = 0;  // into the blob section
  std::uint64_t bytes = 0;
  std::string sha256;

  friend bool operator==(const ScaleEntry&, const ScaleEntry&) = default;
};

struct Manifest {
  std::uint32_t format_version = kBundleFormatVersion;
  std::string job_id;
  std::string source_image_hash;
  ScaleSchedule schedule;
  int best_scale = -1;  // -1 while a progressive delivery is incomplete
  double threshold = 1.01;
  std::uint64_t seed = 0;
  std::vector<ScaleEntry> scales;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Manifest plus the per-scale models it describes. Present scales always
// form the prefix 0..k.
struct TrainedBundle {
  Manifest manifest;
  std::vector<ScaleModel> scales;

  int available_scales() const { return static_cast<int>(scales.size()); }
  int scale_count() const { return manifest.schedule.scale_count; }
  double factor() const { return manifest.schedule.factor; }
  const ScaleModel& scale(int index) const;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// Per-scale parameter blob: little-endian float32 in named_parameters order.
std::vector<std::uint8_t> encode_scale_blob(const ScaleModel& model);
ScaleModel decode_scale_blob(int scale_index, std::span<const std::uint8_t> blob,
                             double noise_amplitude, std::uint64_t rec_seed);

// Rewrites the offset/byte/hash fields from the scale models.
void refresh_scale_entries(TrainedBundle& bundle);

// Manifest <-> structured text (JSON, keys sorted, compact).
std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

// Layout: magic[8] | u32 version | u32 manifest_len | manifest | blobs.
// Errors: kBadFormat (magic), kVersionMismatch, kTruncated, kHashMismatch.
std::vector<std::uint8_t> serialize_bundle(const TrainedBundle& bundle);
TrainedBundle deserialize_bundle(std::span<const std::uint8_t> bytes);

// Verifies structural invariants (prefix, sizes, hashes); throws on violation.
void validate_bundle(const TrainedBundle& bundle);

// zlib stream framed as magic "SGZ1" | u64 raw size | u32 crc32 | deflate.
// Corruption anywhere raises kCorruptStream.
std::vector<std::uint8_t> compress_bundle(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> decompress_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const std::string& path, const TrainedBundle& bundle);
TrainedBundle load_bundle(const std::string& path);

// Copy holding scales 0..count-1 only.
TrainedBundle prefix_bundle(const TrainedBundle& bundle, int count);

}  // namespace setgan
