#include "setgan/bundle.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include "json.hpp"

#include "setgan/error.hpp"
#include "setgan/image_io.hpp"

namespace setgan {

namespace {

using nlohmann::json;

constexpr char kCompressedMagic[4] = {'S', 'G', 'Z', '1'};
constexpr std::size_t kHeaderSize = sizeof(kBundleMagic) + 4 + 4;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  }
  return static_cast<T>(value);
}

json schedule_to_json(const ScaleSchedule& s) {
  json dims = json::array();
  for (const Dims& d : s.dims) dims.push_back({d.height, d.width});
  return {{"scale_count", s.scale_count}, {"factor", s.factor}, {"dims", dims},
          {"min_dim", s.min_dim},         {"max_dim", s.max_dim}};
}

ScaleSchedule schedule_from_json(const json& j) {
  ScaleSchedule s;
  s.scale_count = j.at("scale_count").get<int>();
  s.factor = j.at("factor").get<double>();
  s.min_dim = j.at("min_dim").get<int>();
  s.max_dim = j.at("max_dim").get<int>();
  for (const auto& d : j.at("dims")) s.dims.push_back({d.at(0).get<int>(), d.at(1).get<int>()});
  return s;
}

}  // namespace

const ScaleModel& TrainedBundle::scale(int index) const {
  if (index < 0 || index >= available_scales()) {
    throw Error(ErrorCode::kScaleUnavailable,
                "scale unavailable: " + std::to_string(index) + " (bundle holds " +
                    std::to_string(available_scales()) + ")");
  }
  return scales[index];
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::vector<std::uint8_t> encode_scale_blob(const ScaleModel& model) {
  const std::vector<float> flat = flatten_parameters(model);
  std::vector<std::uint8_t> blob;
  blob.reserve(flat.size() * 4);
  for (float v : flat) put_le(blob, std::bit_cast<std::uint32_t>(v));
  return blob;
}

ScaleModel decode_scale_blob(int scale_index, std::span<const std::uint8_t> blob,
                             double noise_amplitude, std::uint64_t rec_seed) {
  const auto expected = static_cast<std::size_t>(param_count(scale_index)) * 4;
  if (blob.size() < expected) {
    throw Error(ErrorCode::kTruncated, "scale " + std::to_string(scale_index) + " blob truncated: " +
                                           std::to_string(blob.size()) + " of " +
                                           std::to_string(expected) + " bytes");
  }
  if (blob.size() != expected) {
    throw Error(ErrorCode::kBadFormat, "scale " + std::to_string(scale_index) + " blob has " +
                                           std::to_string(blob.size()) + " bytes, expected " +
                                           std::to_string(expected));
  }
  std::vector<float> flat(blob.size() / 4);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = std::bit_cast<float>(get_le<std::uint32_t>(blob, i * 4));
  }
  ScaleModel model = make_scale_model(scale_index, 0, noise_amplitude, rec_seed);
  load_parameters(model, flat);
  return model;
}

void refresh_scale_entries(TrainedBundle& bundle) {
  auto& entries = bundle.manifest.scales;
  entries.resize(bundle.scales.size());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < bundle.scales.size(); ++i) {
    const ScaleModel& model = bundle.scales[i];
    const auto blob = encode_scale_blob(model);
    ScaleEntry& e = entries[i];
    e.index = model.scale_index;
    e.channels = channels_for_scale(model.scale_index);
    e.noise_amplitude = model.noise_amplitude;
    e.rec_seed = model.fixed_rec_seed;
    e.offset = offset;
    e.bytes = blob.size();
    e.sha256 = sha256_hex(blob);
    offset += blob.size();
  }
}

std::string manifest_to_json(const Manifest& m) {
  json scales = json::array();
  for (const ScaleEntry& e : m.scales) {
    scales.push_back({{"index", e.index},
                      {"channels", e.channels},
                      {"noise_amplitude", e.noise_amplitude},
                      {"rec_seed", e.rec_seed},
                      {"exit_ssim", e.exit_ssim},
                      {"offset", e.offset},
                      {"bytes", e.bytes},
                      {"sha256", e.sha256}});
  }
  const json j = {{"format_version", m.format_version},
                  {"job_id", m.job_id},
                  {"source_image_hash", m.source_image_hash},
                  {"schedule", schedule_to_json(m.schedule)},
                  {"best_scale", m.best_scale},
                  {"threshold", m.threshold},
                  {"seed", m.seed},
                  {"scales", scales}};
  return j.dump();
}

Manifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Manifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.job_id = j.at("job_id").get<std::string>();
    m.source_image_hash = j.at("source_image_hash").get<std::string>();
    m.schedule = schedule_from_json(j.at("schedule"));
    m.best_scale = j.at("best_scale").get<int>();
    m.threshold = j.at("threshold").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("scales")) {
      ScaleEntry e;
      e.index = s.at("index").get<int>();
      e.channels = s.at("channels").get<int>();
      e.noise_amplitude = s.at("noise_amplitude").get<double>();
      e.rec_seed = s.at("rec_seed").get<std::uint64_t>();
      e.exit_ssim = s.at("exit_ssim").get<double>();
      e.offset = s.at("offset").get<std::uint64_t>();
      e.bytes = s.at("bytes").get<std::uint64_t>();
      e.sha256 = s.at("sha256").get<std::string>();
      m.scales.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadFormat, std::string("manifest: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize_bundle(const TrainedBundle& bundle) {
  TrainedBundle copy{bundle.manifest, {}};
  copy.scales = bundle.scales;  // shares modules; only read below
  refresh_scale_entries(copy);
  const std::string manifest = manifest_to_json(copy.manifest);

  std::vector<std::uint8_t> out(std::begin(kBundleMagic), std::end(kBundleMagic));
  put_le(out, kBundleFormatVersion);
  put_le(out, static_cast<std::uint32_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const ScaleModel& model : bundle.scales) {
    const auto blob = encode_scale_blob(model);
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

TrainedBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::kTruncated, "bundle header truncated");
  if (std::memcmp(bytes.data(), kBundleMagic, sizeof(kBundleMagic)) != 0) {
    throw Error(ErrorCode::kBadFormat, "not a bundle (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kBundleFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "bundle format version " + std::to_string(version) +
                                                 ", expected " +
                                                 std::to_string(kBundleFormatVersion));
  }
  const auto manifest_size = get_le<std::uint32_t>(bytes, 12);
  if (bytes.size() < kHeaderSize + manifest_size) {
    throw Error(ErrorCode::kTruncated, "bundle manifest truncated");
  }
  TrainedBundle bundle;
  bundle.manifest = manifest_from_json(
      std::string(reinterpret_cast<const char*>(bytes.data() + kHeaderSize), manifest_size));
  if (bundle.manifest.format_version != kBundleFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "manifest format version mismatch");
  }
  const auto blobs = bytes.subspan(kHeaderSize + manifest_size);
  for (std::size_t i = 0; i < bundle.manifest.scales.size(); ++i) {
    const ScaleEntry& e = bundle.manifest.scales[i];
    if (e.index != static_cast<int>(i)) {
      throw Error(ErrorCode::kBadFormat, "bundle scales are not a prefix 0..k");
    }
    if (e.offset + e.bytes > blobs.size()) {
      throw Error(ErrorCode::kTruncated, "scale " + std::to_string(i) + " blob truncated");
    }
    const auto blob = blobs.subspan(e.offset, e.bytes);
    if (sha256_hex(blob) != e.sha256) {
      throw Error(ErrorCode::kHashMismatch, "scale " + std::to_string(i) + " content hash mismatch");
    }
    bundle.scales.push_back(decode_scale_blob(e.index, blob, e.noise_amplitude, e.rec_seed));
  }
  validate_bundle(bundle);
  return bundle;
}

void validate_bundle(const TrainedBundle& bundle) {
  const Manifest& m = bundle.manifest;
  if (m.scales.size() != bundle.scales.size()) {
    throw Error(ErrorCode::kBadFormat, "manifest lists a different number of scales than present");
  }
  if (static_cast<int>(bundle.scales.size()) > m.schedule.scale_count ||
      static_cast<int>(m.schedule.dims.size()) != m.schedule.scale_count) {
    throw Error(ErrorCode::kBadFormat, "bundle holds more scales than its schedule");
  }
  for (std::size_t i = 0; i < bundle.scales.size(); ++i) {
    if (bundle.scales[i].scale_index != static_cast<int>(i) || m.scales[i].index != static_cast<int>(i)) {
      throw Error(ErrorCode::kBadFormat, "bundle scales are not a prefix 0..k");
    }
    if (m.scales[i].bytes != static_cast<std::uint64_t>(param_count(static_cast<int>(i))) * 4) {
      throw Error(ErrorCode::kBadFormat, "manifest byte size disagrees with the architecture");
    }
  }
}

std::vector<std::uint8_t> compress_bundle(std::span<const std::uint8_t> bytes) {
  uLongf bound = compressBound(static_cast<uLong>(bytes.size()));
  std::vector<std::uint8_t> body(bound);
  if (compress2(body.data(), &bound, bytes.data(), static_cast<uLong>(bytes.size()), 9) != Z_OK) {
    throw Error(ErrorCode::kIo, "compression failed");
  }
  body.resize(bound);
  std::vector<std::uint8_t> out(std::begin(kCompressedMagic), std::end(kCompressedMagic));
  put_le(out, static_cast<std::uint64_t>(bytes.size()));
  put_le(out, static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()))));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> decompress_bundle(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 4 + 8 + 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kCompressedMagic, 4) != 0) {
    throw Error(ErrorCode::kCorruptStream, "compressed stream header invalid");
  }
  const auto size = get_le<std::uint64_t>(bytes, 4);
  const auto crc = get_le<std::uint32_t>(bytes, 12);
  // deflate cannot expand data by more than ~1032x
  if (size > 1032 * static_cast<std::uint64_t>(bytes.size()) + 64) {
    throw Error(ErrorCode::kCorruptStream, "compressed stream declares an impossible size");
  }
  std::vector<std::uint8_t> out(size);
  uLongf out_size = static_cast<uLongf>(size);
  const auto body = bytes.subspan(header);
  const int status = uncompress(out.data(), &out_size, body.data(), static_cast<uLong>(body.size()));
  if (status != Z_OK || out_size != size) {
    throw Error(ErrorCode::kCorruptStream, "compressed stream corrupt (zlib status " +
                                               std::to_string(status) + ")");
  }
  if (crc32(0L, out.data(), static_cast<uInt>(out.size())) != crc) {
    throw Error(ErrorCode::kCorruptStream, "compressed stream checksum mismatch");
  }
  return out;
}

void save_bundle(const std::string& path, const TrainedBundle& bundle) {
  write_file(path, serialize_bundle(bundle));
}

TrainedBundle load_bundle(const std::string& path) { return deserialize_bundle(read_file(path)); }

TrainedBundle prefix_bundle(const TrainedBundle& bundle, int count) {
  if (count < 0 || count > bundle.available_scales()) {
    throw Error(ErrorCode::kScaleUnavailable, "prefix longer than the bundle");
  }
  TrainedBundle out{bundle.manifest, {}};
  out.manifest.scales.resize(count);
  for (int i = 0; i < count; ++i) out.scales.push_back(bundle.scales[i]);
  return out;
}

}  // namespace setgan
