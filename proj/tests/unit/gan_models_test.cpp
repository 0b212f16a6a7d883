#include <gtest/gtest.h>

#include "setgan/error.hpp"
#include "setgan/gan_models.hpp"
#include "setgan/noise.hpp"
#include "textures.hpp"

namespace setgan {
namespace {

// conv(in->out, 3x3) weights + bias, plus BN scale and shift where present.
std::int64_t hand_count(int c, int last_out) {
  auto conv = [](std::int64_t in, std::int64_t out) { return in * out * 9 + out; };
  std::int64_t n = conv(3, c) + 2 * c;
  for (int b = 0; b < 3; ++b) n += conv(c, c) + 2 * c;
  return n + conv(c, last_out);
}

void zero_parameters(ConvNet& net) {
  torch::NoGradGuard guard;
  for (auto& p : net->parameters()) p.zero_();
}

std::int64_t module_numel(const ConvNet& net) {
  std::int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

TEST(GanSpecTest, ChannelDoublingRule) {
  EXPECT_EQ(channels_for_scale(0), 32);
  EXPECT_EQ(channels_for_scale(3), 32);
  EXPECT_EQ(channels_for_scale(4), 64);
  EXPECT_EQ(channels_for_scale(7), 64);
  EXPECT_EQ(channels_for_scale(8), 128);
  EXPECT_EQ(generator_spec(8).channels, 128);
}

TEST(GanSpecTest, BlockLayout) {
  const NetworkSpec g = generator_spec(2);
  const NetworkSpec d = discriminator_spec(2);
  ASSERT_EQ(g.blocks.size(), 5u);
  ASSERT_EQ(d.blocks.size(), 5u);
  for (int b = 0; b < 4; ++b) {
    EXPECT_TRUE(g.blocks[b].batch_norm);
    EXPECT_EQ(g.blocks[b].activation, Activation::kLeakyRelu);
    EXPECT_TRUE(d.blocks[b].batch_norm);
  }
  EXPECT_EQ(g.blocks[0].in_channels, 3);
  EXPECT_EQ(g.blocks[4].out_channels, 3);
  EXPECT_EQ(g.blocks[4].activation, Activation::kTanh);
  EXPECT_FALSE(g.blocks[4].batch_norm);
  EXPECT_EQ(d.blocks[4].out_channels, 1);
  EXPECT_EQ(d.blocks[4].activation, Activation::kNone);
  EXPECT_FALSE(d.blocks[4].batch_norm);
}

TEST(ParamCountTest, MatchesLayerShapesAndModules) {
  for (int s = 0; s <= 9; ++s) {
    const int c = channels_for_scale(s);
    const std::int64_t expected = hand_count(c, 3) + hand_count(c, 1);
    EXPECT_EQ(param_count(s), expected) << s;
    EXPECT_EQ(module_numel(build_generator(s, 1)) + module_numel(build_discriminator(s, 1)), expected);
  }
  EXPECT_EQ(param_count(0), 58948);
}

TEST(ParamCountTest, BandsAndRatio) {
  for (int s = 1; s <= 3; ++s) EXPECT_EQ(param_count(s), param_count(0));
  for (int s = 5; s <= 7; ++s) EXPECT_EQ(param_count(s), param_count(4));
  const double ratio = static_cast<double>(param_count(4)) / param_count(0);
  EXPECT_DOUBLE_EQ(ratio, static_cast<double>(hand_count(64, 3) + hand_count(64, 1)) /
                              (hand_count(32, 3) + hand_count(32, 1)));
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
  EXPECT_GT(param_count(8), param_count(7));
}

TEST(InitTest, DeterministicAndScaled) {
  const ConvNet a = build_generator(1, 42);
  const ConvNet b = build_generator(1, 42);
  const ConvNet c = build_generator(1, 43);
  const auto pa = a->parameters();
  const auto pb = b->parameters();
  const auto pc = c->parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(torch::equal(pa[i], pb[i]));
    differs = differs || !torch::equal(pa[i], pc[i]);
  }
  EXPECT_TRUE(differs);
  const torch::Tensor w = a->named_parameters()["block1_conv.weight"];
  EXPECT_NEAR(w.mean().item<double>(), 0.0, 0.002);
  EXPECT_NEAR(w.std().item<double>(), kInitStddev, 0.002);
  EXPECT_TRUE(torch::equal(a->named_parameters()["block1_norm.weight"],
                           torch::ones_like(a->named_parameters()["block1_norm.weight"])));
}

TEST(GeneratorTest, ZeroResidualCopiesCoarseInput) {
  ScaleModel m = make_scale_model(3, 5, 0.1, 9);
  zero_parameters(m.generator);
  const ImageGrid coarse = testing::random_image({20, 30}, 2);
  const ImageGrid out = generator_forward(m, zero_noise({20, 30}), &coarse);
  EXPECT_EQ(out, coarse);
}

TEST(GeneratorTest, PreservesArbitraryDims) {
  const ScaleModel m0 = make_scale_model(0, 1, 1.0, 2);
  const ScaleModel m5 = make_scale_model(5, 1, 0.2, 2);
  const Dims dims[] = {{37, 51}, {11, 11}, {25, 40}, {64, 13}, {19, 77}};
  for (Dims d : dims) {
    const NoiseMap z = make_noise_map(d, 4, 1.0);
    EXPECT_EQ(generator_forward(m0, z, nullptr).dims(), d);
    const ImageGrid coarse = testing::random_image(d, 8);
    EXPECT_EQ(generator_forward(m5, z, &coarse).dims(), d);
  }
}

TEST(GeneratorTest, OutputBoundedAndDeterministic) {
  const ScaleModel m = make_scale_model(1, 3, 0.5, 4);
  ImageGrid coarse(24, 24, 0.95f);
  const NoiseMap z = make_noise_map({24, 24}, 77, 5.0);
  const ImageGrid a = generator_forward(m, z, &coarse);
  const ImageGrid b = generator_forward(m, z, &coarse);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.within_unit_range());
  const ScaleModel m0 = make_scale_model(0, 3, 1.0, 4);
  EXPECT_TRUE(generator_forward(m0, make_noise_map({24, 24}, 1, 50.0), nullptr).within_unit_range());
}

TEST(GeneratorTest, RejectsMismatchedInputs) {
  const ScaleModel m0 = make_scale_model(0, 1, 1.0, 2);
  const ScaleModel m1 = make_scale_model(1, 1, 0.1, 2);
  const ImageGrid coarse(16, 16);
  EXPECT_THROW(generator_forward(m0, zero_noise({16, 16}), &coarse), Error);
  EXPECT_THROW(generator_forward(m1, zero_noise({16, 16}), nullptr), Error);
  EXPECT_THROW(generator_forward(m1, zero_noise({16, 17}), &coarse), Error);
}

TEST(DiscriminatorTest, ZeroWeightsScoreZero) {
  ScaleModel m = make_scale_model(2, 1, 0.1, 2);
  zero_parameters(m.discriminator);
  EXPECT_EQ(discriminator_forward(m, testing::random_image({30, 30}, 1)), 0.0);
}

TEST(DiscriminatorTest, ScoreMapShapeAndMean) {
  const ScaleModel m = make_scale_model(0, 1, 1.0, 2);
  // Five same-padded 3x3 convolutions: each output sees 1 + 5*2 = 11 pixels.
  EXPECT_EQ(receptive_field(), 1 + kBlocksPerNetwork * (kKernelSize - 1));
  ConvNet d = m.discriminator;
  const torch::Tensor x = to_tensor(testing::random_image({25, 25}, 6));
  const torch::Tensor map = discriminator_score_map(d, x);
  EXPECT_EQ(map.sizes(), (std::vector<std::int64_t>{1, 1, 25, 25}));
  EXPECT_NEAR(discriminator_score(d, x).item<double>(), map.mean().item<double>(), 1e-7);
  const torch::Tensor hand = torch::tensor({1.0f, 2.0f, 3.0f, 4.0f}).reshape({1, 1, 2, 2});
  EXPECT_FLOAT_EQ(hand.mean().item<float>(), 2.5f);
}

TEST(DiscriminatorTest, RejectsInputBelowReceptiveField) {
  const ScaleModel m = make_scale_model(0, 1, 1.0, 2);
  EXPECT_THROW(discriminator_forward(m, ImageGrid(10, 40)), Error);
  EXPECT_NO_THROW(discriminator_forward(m, ImageGrid(11, 11)));
}

TEST(ParametersTest, StableOrderAndRoundTrip) {
  const ScaleModel a = make_scale_model(4, 10, 0.3, 1);
  const auto names = named_parameters(a);
  ASSERT_FALSE(names.empty());
  EXPECT_EQ(names.front().first.rfind("generator.", 0), 0u);
  EXPECT_EQ(names.back().first.rfind("discriminator.", 0), 0u);
  const auto flat = flatten_parameters(a);
  EXPECT_EQ(static_cast<std::int64_t>(flat.size()), param_count(4));

  ScaleModel b = make_scale_model(4, 99, 0.3, 1);
  load_parameters(b, flat);
  EXPECT_EQ(flatten_parameters(b), flat);
  EXPECT_THROW(load_parameters(b, std::span<const float>(flat.data(), flat.size() - 1)), Error);

  const ScaleModel c = clone(a);
  EXPECT_EQ(flatten_parameters(c), flat);
}

}  // namespace
}  // namespace setgan
