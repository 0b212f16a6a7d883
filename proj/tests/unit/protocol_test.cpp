#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "setgan/editor_apps.hpp"
#include "setgan/error.hpp"
#include "setgan/image_io.hpp"
#include "setgan/inference.hpp"
#include "setgan/protocol.hpp"
#include "textures.hpp"

namespace setgan {
namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TrainConfig job_config() {
  TrainConfig c;
  c.iterations_per_scale = 2;
  c.max_dim = 40;
  c.min_dim = 22;
  c.worker_count = 2;
  c.seed = 12;
  return c;
}

PrefixPublisher::Published fake_scale(int i) {
  return {ScaleEntry{i, 32, 0.1, 1, 0.5, 0, 0, ""}, std::vector<std::uint8_t>(4 * (i + 1), static_cast<std::uint8_t>(i))};
}

TEST(DeliveryModeTest, ParseAndName) {
  for (DeliveryMode m : {DeliveryMode::kBaselineSerial, DeliveryMode::kParallelOneshot, DeliveryMode::kProgressive}) {
    EXPECT_EQ(parse_delivery_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_delivery_mode("eager"), Error);
}

TEST(ProgressEventTest, JsonRoundTrip) {
  const ProgressEvent e{7, "scale_ready", 3, 1024, "ab", "x"};
  EXPECT_EQ(ProgressEvent::from_json(e.to_json()), e);
}

TEST(PrefixPublisherTest, RandomOrderStressNeverBreaksPrefix) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (rng() % 2) order.push_back(order[rng() % n]);  // duplicate completion
    PrefixPublisher pub;
    std::vector<int> released;
    std::vector<bool> done(n, false);
    for (int i : order) {
      done[i] = true;
      for (int r : pub.complete(i, fake_scale(i).entry, fake_scale(i).blob)) released.push_back(r);
      int expected_prefix = 0;
      while (expected_prefix < n && done[expected_prefix]) ++expected_prefix;
      ASSERT_EQ(pub.published_count(), expected_prefix);
      for (int k = 0; k < n; ++k) ASSERT_EQ(pub.get(k).has_value(), k < expected_prefix);
    }
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    ASSERT_EQ(released, all);
    std::uint64_t offset = 0;
    for (const ScaleEntry& e : pub.published_entries()) {
      EXPECT_EQ(e.offset, offset);
      EXPECT_EQ(e.bytes, 4u * (e.index + 1));
      EXPECT_EQ(e.sha256, sha256_hex(fake_scale(e.index).blob));
      offset += e.bytes;
    }
  }
}

TEST(PrefixPublisherTest, ConcurrentCompletion) {
  PrefixPublisher pub;
  std::vector<std::thread> threads;
  for (int i = 0; i < 16; ++i) {
    threads.emplace_back([&pub, i] {
      std::this_thread::sleep_for(std::chrono::microseconds((i * 7919) % 500));
      pub.complete(i, fake_scale(i).entry, fake_scale(i).blob);
      const int visible = pub.published_count();
      for (int k = 0; k < visible; ++k) EXPECT_TRUE(pub.get(k).has_value());
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(pub.published_count(), 16);
}

TEST(PrefixPublisherTest, ManualRelease) {
  PrefixPublisher pub;
  pub.set_auto_release(false);
  for (int i : {2, 0, 1}) EXPECT_TRUE(pub.complete(i, fake_scale(i).entry, fake_scale(i).blob).empty());
  EXPECT_EQ(pub.published_count(), 0);
  EXPECT_EQ(pub.release_through(1), (std::vector<int>{0, 1}));
  EXPECT_EQ(pub.published_count(), 2);
  EXPECT_EQ(pub.release_through(2), (std::vector<int>{2}));
}

TEST(ConfigJsonTest, RoundTripAndStrictKeys) {
  TrainConfig c = job_config();
  c.ssim_threshold = 0.8;
  c.learning_rate = 0.001;
  const TrainConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.iterations_per_scale, 2);
  EXPECT_DOUBLE_EQ(back.ssim_threshold, 0.8);
  EXPECT_THROW(config_from_json(R"({"iterations": 3})"), Error);
  EXPECT_THROW(config_from_json(R"({"worker_count": 0})"), Error);
  EXPECT_EQ(config_from_json("{}").iterations_per_scale, TrainConfig{}.iterations_per_scale);
}

TEST(ServerAddressTest, Forms) {
  EXPECT_EQ(parse_server_address("localhost:8080"), std::make_pair(std::string("localhost"), 8080));
  EXPECT_EQ(parse_server_address("http://10.0.0.2:9000/"), std::make_pair(std::string("10.0.0.2"), 9000));
  EXPECT_THROW(parse_server_address("nohost"), Error);
  EXPECT_THROW(parse_server_address("h:abc"), Error);
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fresh_dir("setgan_server_test");
    server_ = std::make_unique<ModelServer>(ServerOptions{root_});
    port_ = server_->start();
  }
  void TearDown() override {
    server_->stop();
    std::filesystem::remove_all(root_);
  }

  std::filesystem::path root_;
  std::unique_ptr<ModelServer> server_;
  int port_ = 0;
  ImageGrid image_ = testing::make_texture({40, 40}, 3);
};

TEST_F(ServerTest, ProgressiveJobEndToEnd) {
  ModelClient client("127.0.0.1", port_);
  const SubmitResponse job = client.submit_train(image_, job_config(), DeliveryMode::kProgressive);
  ASSERT_FALSE(job.job_id.empty());
  server_->wait_for_job(job.job_id);

  const JobStatus status = client.get_status(job.job_id, job.token);
  EXPECT_EQ(status.state, "done");
  EXPECT_EQ(status.mode, DeliveryMode::kProgressive);
  const Manifest manifest = client.get_manifest(job.job_id, job.token);
  EXPECT_EQ(status.published, manifest.schedule.scale_count);
  EXPECT_EQ(status.best_scale, manifest.best_scale);

  std::vector<ProgressEvent> events;
  client.subscribe(job.job_id, job.token, 0, [&](const ProgressEvent& e) {
    events.push_back(e);
    return e.type == "scale_ready";
  });
  ASSERT_EQ(static_cast<int>(events.size()), manifest.schedule.scale_count + 1);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].id, i + 1);
  EXPECT_EQ(events.back().type, "job_done");
  std::vector<int> order;
  for (const auto& e : events) if (e.type == "scale_ready") order.push_back(e.scale);
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));

  // Reconnecting after event 2 replays exactly the rest.
  std::vector<ProgressEvent> replay;
  client.subscribe(job.job_id, job.token, 2, [&](const ProgressEvent& e) {
    replay.push_back(e);
    return e.type == "scale_ready";
  });
  EXPECT_EQ(replay, std::vector<ProgressEvent>(events.begin() + 2, events.end()));

  const AssembledBundle assembled = client.assemble(job.job_id, job.token);
  EXPECT_TRUE(assembled.complete);
  EXPECT_FALSE(assembled.refreshable);
  EXPECT_EQ(assembled.bundle.manifest, manifest);
  // The server trains on the decoded upload.
  const TrainingResult local = train_all_parallel(decode_image(encode_png(image_)), job_config());
  ASSERT_EQ(assembled.bundle.available_scales(), local.bundle.available_scales());
  EXPECT_EQ(serialize_bundle(assembled.bundle), serialize_bundle(local.bundle));
}

TEST_F(ServerTest, AuthAndErrors) {
  ModelClient client("127.0.0.1", port_);
  const SubmitResponse job = client.submit_train(image_, job_config(), DeliveryMode::kParallelOneshot);
  server_->wait_for_job(job.job_id);

  httplib::Client raw("127.0.0.1", port_);
  EXPECT_EQ(raw.Get("/jobs/" + job.job_id + "/status")->status, 401);
  EXPECT_EQ(raw.Get("/jobs/" + job.job_id + "/status", {{"Authorization", "Bearer nope"}})->status, 401);
  EXPECT_EQ(raw.Get("/jobs/unknown/status", {{"Authorization", "Bearer " + job.token}})->status, 404);
  const auto missing = raw.Get("/jobs/" + job.job_id + "/scales/99", {{"Authorization", "Bearer " + job.token}});
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(nlohmann::json::parse(missing->body).at("error"), "scale_unavailable");
  const auto blob = raw.Get("/jobs/" + job.job_id + "/scales/0", {{"Authorization", "Bearer " + job.token}});
  ASSERT_EQ(blob->status, 200);
  EXPECT_EQ(blob->get_header_value("X-Content-SHA256"),
            sha256_hex({reinterpret_cast<const std::uint8_t*>(blob->body.data()), blob->body.size()}));

  EXPECT_EQ(raw.Post("/jobs?mode=progressive", "not an image", "image/png")->status, 400);
  EXPECT_EQ(raw.Post("/jobs?mode=fast", "", "image/png")->status, 400);
  try {
    client.get_status(job.job_id, "wrong");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnauthorized);
  }
}

TEST_F(ServerTest, PendingScalesAnswer202AndRefreshExtends) {
  TrainConfig c = job_config();
  c.iterations_per_scale = 40;
  c.worker_count = 1;
  ModelClient client("127.0.0.1", port_);
  const SubmitResponse job = client.submit_train(image_, c, DeliveryMode::kProgressive);
  const Manifest early = client.get_manifest(job.job_id, job.token);
  const int last = early.schedule.scale_count - 1;
  EXPECT_FALSE(client.get_scale(job.job_id, job.token, last).has_value());

  AssembledBundle partial;
  for (int tries = 0; tries < 600 && partial.bundle.available_scales() == 0; ++tries) {
    try {
      partial = client.assemble(job.job_id, job.token);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kNotReady);
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
  ASSERT_GT(partial.bundle.available_scales(), 0);
  const auto first_blob = encode_scale_blob(partial.bundle.scales[0]);
  server_->wait_for_job(job.job_id);
  client.refresh(partial, job.job_id, job.token);
  EXPECT_TRUE(partial.complete);
  EXPECT_EQ(partial.bundle.available_scales(), last + 1);
  EXPECT_EQ(encode_scale_blob(partial.bundle.scales[0]), first_blob);
  EXPECT_NO_THROW(validate_bundle(partial.bundle));
}

TEST_F(ServerTest, JobsSurviveRestart) {
  ModelClient client("127.0.0.1", port_);
  const SubmitResponse job = client.submit_train(image_, job_config(), DeliveryMode::kProgressive);
  server_->wait_for_job(job.job_id);
  const auto before = serialize_bundle(client.assemble(job.job_id, job.token).bundle);
  server_->stop();

  server_ = std::make_unique<ModelServer>(ServerOptions{root_});
  port_ = server_->start();
  ModelClient again("127.0.0.1", port_);
  EXPECT_EQ(again.get_status(job.job_id, job.token).state, "done");
  EXPECT_EQ(serialize_bundle(again.assemble(job.job_id, job.token).bundle), before);
  std::vector<ProgressEvent> events;
  again.subscribe(job.job_id, job.token, 0, [&](const ProgressEvent& e) {
    events.push_back(e);
    return e.type == "scale_ready";
  });
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().type, "job_done");
}

class EdgeServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    bundle_ = testing::toy_bundle(48, 20, 5);
    server_ = std::make_unique<EdgeServer>(bundle_);
    port_ = server_->start();
  }
  void TearDown() override { server_->stop(); }

  TrainedBundle bundle_;
  std::unique_ptr<EdgeServer> server_;
  int port_ = 0;
};

TEST_F(EdgeServerTest, GenerateMatchesLibrary) {
  httplib::Client raw("127.0.0.1", port_);
  EXPECT_EQ(manifest_from_json(raw.Get("/bundle")->body), bundle_.manifest);
  const auto res = raw.Post("/generate", R"({"up_to_scale": 2, "seed": 4})", "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(res->get_header_value("X-Setgan-Scale"), "2");
  GenerationRequest r;
  r.up_to_scale = 2;
  r.seed = 4;
  const auto expected = encode_png(generate(bundle_, r));
  EXPECT_EQ(std::vector<std::uint8_t>(res->body.begin(), res->body.end()), expected);
  EXPECT_EQ(raw.Post("/generate", R"({"up_to_scale": 99})", "application/json")->status, 404);
  EXPECT_EQ(raw.Post("/generate", "{", "application/json")->status, 400);
}

TEST_F(EdgeServerTest, EditEndpoint) {
  httplib::Client raw("127.0.0.1", port_);
  const Dims d = bundle_.manifest.schedule.finest();
  const auto [composite, mask] = testing::make_composite(testing::make_texture(d, 2));
  const auto png = encode_png(composite);
  const auto mask_png = encode_mask_png(mask);
  const std::string image_bytes(png.begin(), png.end()), mask_bytes(mask_png.begin(), mask_png.end());

  httplib::MultipartFormDataItems form = {{"kind", "editing", "", ""},
                                          {"image", image_bytes, "c.png", "image/png"},
                                          {"mask", mask_bytes, "m.png", "image/png"},
                                          {"scale", "2", "", ""},
                                          {"seed", "8", "", ""}};
  const auto res = raw.Post("/edit", form);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto expected = encode_png(edit(bundle_, decode_image(png), decode_mask(mask_png), 2, 8).image);
  EXPECT_EQ(std::vector<std::uint8_t>(res->body.begin(), res->body.end()), expected);

  httplib::MultipartFormDataItems paint = {{"kind", "paint2image", "", ""},
                                           {"image", image_bytes, "c.png", "image/png"},
                                           {"scale", "7", "", ""}};
  const auto clamped = raw.Post("/edit", paint);
  ASSERT_EQ(clamped->status, 200);
  EXPECT_EQ(clamped->get_header_value("X-Setgan-Scale"), "2");
  EXPECT_EQ(nlohmann::json::parse(clamped->get_header_value("X-Setgan-Warnings")).size(), 1u);

  const double s = bundle_.factor() * bundle_.factor();
  httplib::MultipartFormDataItems sr = {{"kind", "super_resolution", "", ""},
                                        {"image", image_bytes, "c.png", "image/png"},
                                        {"factor", std::to_string(s), "", ""},
                                        {"passes", "2", "", ""}};
  const auto up = raw.Post("/edit", sr);
  ASSERT_EQ(up->status, 200) << up->body;
  EXPECT_EQ(decode_image({reinterpret_cast<const std::uint8_t*>(up->body.data()), up->body.size()}).dims(),
            (Dims{round_dim(d.height * s), round_dim(d.width * s)}));

  httplib::MultipartFormDataItems no_mask = {{"kind", "harmonization", "", ""},
                                             {"image", image_bytes, "c.png", "image/png"}};
  EXPECT_EQ(raw.Post("/edit", no_mask)->status, 400);
}

}  // namespace
}  // namespace setgan
