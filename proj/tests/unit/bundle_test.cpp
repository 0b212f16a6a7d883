#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "setgan/bundle.hpp"
#include "setgan/error.hpp"
#include "setgan/trainer.hpp"
#include "textures.hpp"

namespace setgan {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

void expect_same_models(const TrainedBundle& a, const TrainedBundle& b) {
  ASSERT_EQ(a.available_scales(), b.available_scales());
  for (int i = 0; i < a.available_scales(); ++i) {
    EXPECT_EQ(flatten_parameters(a.scales[i]), flatten_parameters(b.scales[i]));
    EXPECT_EQ(a.scales[i].noise_amplitude, b.scales[i].noise_amplitude);
    EXPECT_EQ(a.scales[i].fixed_rec_seed, b.scales[i].fixed_rec_seed);
  }
}

TEST(BundleTest, RoundTripIsBitExact) {
  TrainedBundle b = testing::toy_bundle(40, 20, 1);
  b.manifest.job_id = "abc";
  b.manifest.best_scale = 1;
  const auto bytes = serialize_bundle(b);
  const TrainedBundle back = deserialize_bundle(bytes);
  EXPECT_EQ(back.manifest, b.manifest);
  expect_same_models(back, b);
  EXPECT_EQ(serialize_bundle(back), bytes);
  EXPECT_EQ(manifest_from_json(manifest_to_json(b.manifest)), b.manifest);
}

TEST(BundleTest, BlobIsFourBytesPerParameter) {
  const TrainedBundle b = testing::toy_bundle(40, 20, 1);
  for (int i = 0; i < b.available_scales(); ++i) {
    const auto blob = encode_scale_blob(b.scales[i]);
    EXPECT_EQ(static_cast<std::int64_t>(blob.size()), 4 * param_count(i));
    EXPECT_EQ(b.manifest.scales[i].bytes, blob.size());
    EXPECT_EQ(b.manifest.scales[i].sha256, sha256_hex(blob));
    const ScaleModel back = decode_scale_blob(i, blob, 0.5, 7);
    EXPECT_EQ(flatten_parameters(back), flatten_parameters(b.scales[i]));
  }
}

TEST(BundleTest, ShaKnownVector) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(BundleTest, FinestScaleDominatesSize) {
  const TrainedBundle b =
      untrained_bundle(compute_scale_schedule({256, 256}, 256, 25, 4.0 / 3.0), 2);
  ASSERT_EQ(b.scale_count(), 9);
  const double through8 = static_cast<double>(serialize_bundle(b).size());
  const double through7 = static_cast<double>(serialize_bundle(prefix_bundle(b, 8)).size());
  EXPECT_LT(through7, through8);
  const double drop = 1.0 - through7 / through8;
  EXPECT_GE(drop, 0.35);
  EXPECT_LE(drop, 0.55);
  // Parameter-only oracle: 4 x (4*p0 + 4*p4) vs adding p8.
  const double p = 4.0 * param_count(0) + 4.0 * param_count(4);
  EXPECT_NEAR(drop, param_count(8) / (p + param_count(8)), 0.01);
}

TEST(BundleTest, PrefixBundles) {
  const TrainedBundle b = testing::toy_bundle(40, 20, 1);
  const TrainedBundle p = prefix_bundle(b, 2);
  EXPECT_EQ(p.available_scales(), 2);
  EXPECT_EQ(p.scale_count(), b.scale_count());
  EXPECT_NO_THROW(validate_bundle(p));
  expect_same_models(deserialize_bundle(serialize_bundle(p)), p);
  EXPECT_EQ(code_of([&] { prefix_bundle(b, b.available_scales() + 1); }), ErrorCode::kScaleUnavailable);
  EXPECT_EQ(code_of([&] { (void)p.scale(2); }), ErrorCode::kScaleUnavailable);
}

TEST(BundleTest, CorruptionIsDetected) {
  const auto bytes = serialize_bundle(testing::toy_bundle(40, 20, 1));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize_bundle(bad); }), ErrorCode::kBadFormat);
  bad = bytes;
  bad[8] = 9;
  EXPECT_EQ(code_of([&] { deserialize_bundle(bad); }), ErrorCode::kVersionMismatch);
  EXPECT_EQ(code_of([&] { deserialize_bundle(std::span(bytes).first(10)); }), ErrorCode::kTruncated);
  EXPECT_EQ(code_of([&] { deserialize_bundle(std::span(bytes).first(bytes.size() - 1)); }),
            ErrorCode::kTruncated);
  bad = bytes;
  bad.back() ^= 0x40;
  EXPECT_EQ(code_of([&] { deserialize_bundle(bad); }), ErrorCode::kHashMismatch);
}

TEST(BundleTest, ValidateCatchesInconsistentManifest) {
  TrainedBundle b = testing::toy_bundle(40, 20, 1);
  b.manifest.scales.pop_back();
  EXPECT_THROW(validate_bundle(b), Error);
  b = testing::toy_bundle(40, 20, 1);
  b.manifest.scales[0].bytes += 4;
  EXPECT_THROW(validate_bundle(b), Error);
}

TEST(CompressionTest, RoundTripAndCorruption) {
  const auto bytes = serialize_bundle(testing::toy_bundle(40, 20, 1));
  const auto packed = compress_bundle(bytes);
  EXPECT_EQ(std::string(packed.begin(), packed.begin() + 4), "SGZ1");
  EXPECT_EQ(decompress_bundle(packed), bytes);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto bad = packed;
    std::uniform_int_distribution<std::size_t> pos(0, bad.size() - 1);
    bad[pos(rng)] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_EQ(code_of([&] { decompress_bundle(bad); }), ErrorCode::kCorruptStream) << trial;
  }
  EXPECT_EQ(code_of([&] { decompress_bundle(std::span(packed).first(packed.size() / 2)); }),
            ErrorCode::kCorruptStream);
}

TEST(BundleFileTest, SaveLoad) {
  const TrainedBundle b = testing::toy_bundle(40, 20, 1);
  const auto path = std::filesystem::temp_directory_path() / "setgan_bundle_test.sgb";
  save_bundle(path.string(), b);
  const TrainedBundle back = load_bundle(path.string());
  EXPECT_EQ(back.manifest, b.manifest);
  expect_same_models(back, b);
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([&] { load_bundle(path.string()); }), ErrorCode::kIo);
}

}  // namespace
}  // namespace setgan
