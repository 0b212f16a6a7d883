#include <gtest/gtest.h>

#include "setgan/error.hpp"
#include "setgan/image_io.hpp"
#include "setgan/inference.hpp"
#include "textures.hpp"

namespace setgan {
namespace {

class InferenceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bundle_ = new TrainedBundle(testing::toy_bundle(48, 20, 3)); }
  static void TearDownTestSuite() { delete bundle_; }
  static TrainedBundle* bundle_;
};
TrainedBundle* InferenceTest::bundle_ = nullptr;

TEST_F(InferenceTest, DimsFollowGeometricChain) {
  const TrainedBundle& b = *bundle_;
  for (int i = 0; i < b.scale_count(); ++i) {
    EXPECT_EQ(generation_dims(b.manifest.schedule.coarsest(), b.factor(), i), b.manifest.schedule.dims[i]) << i;
    GenerationRequest r;
    r.up_to_scale = i;
    EXPECT_EQ(generate(b, r).dims(), b.manifest.schedule.dims[i]);
  }
  EXPECT_EQ(generation_dims({10, 20}, 1.5, 2), (Dims{23, 45}));
}

TEST_F(InferenceTest, SameSeedSamePng) {
  GenerationRequest r;
  r.up_to_scale = bundle_->scale_count() - 1;
  r.seed = 42;
  const auto a = encode_png(generate(*bundle_, r));
  const auto b = encode_png(generate(*bundle_, r));
  EXPECT_EQ(a, b);
  r.seed = 43;
  EXPECT_NE(a, encode_png(generate(*bundle_, r)));
}

TEST_F(InferenceTest, OutputStaysInUnitRange) {
  GenerationRequest r;
  r.up_to_scale = bundle_->scale_count() - 1;
  EXPECT_TRUE(generate(*bundle_, r).within_unit_range());
}

TEST_F(InferenceTest, NonSquareCoarsestDims) {
  GenerationRequest r;
  r.up_to_scale = bundle_->scale_count() - 1;
  r.coarsest_dims = Dims{25, 40};
  const ImageGrid out = generate(*bundle_, r);
  EXPECT_EQ(out.dims(), generation_dims({25, 40}, bundle_->factor(), r.up_to_scale));
  EXPECT_GT(out.width(), out.height());
}

TEST_F(InferenceTest, PartialBundleMatchesTruncatedFullBundle) {
  for (int k = 0; k < bundle_->scale_count(); ++k) {
    const TrainedBundle partial = prefix_bundle(*bundle_, k + 1);
    GenerationRequest r;
    r.up_to_scale = k;
    r.seed = 9;
    EXPECT_EQ(generate(partial, r), generate(*bundle_, r)) << k;
    if (k + 1 < bundle_->scale_count()) {
      r.up_to_scale = k + 1;
      try {
        generate(partial, r);
        FAIL();
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kScaleUnavailable);
      }
    }
  }
}

TEST_F(InferenceTest, InjectionBounds) {
  const int top = bundle_->scale_count() - 1;
  const ImageGrid img = testing::make_texture({30, 30}, 1);
  EXPECT_THROW(inject(*bundle_, img, 0, top, 1), Error);
  EXPECT_THROW(inject(*bundle_, img, top + 1, top, 1), Error);
  const ImageGrid out = inject(*bundle_, img, 1, top, 1);
  EXPECT_EQ(out.dims(), bundle_->manifest.schedule.finest());
  GenerationRequest r;
  r.up_to_scale = top;
  r.seed = 1;
  r.inject = Injection{img, 1};
  EXPECT_EQ(generate(*bundle_, r), out);
  EXPECT_NE(inject(*bundle_, img, 2, top, 1), out);
}

TEST_F(InferenceTest, RejectsBadRequests) {
  GenerationRequest r;
  r.up_to_scale = -1;
  EXPECT_THROW(generate(*bundle_, r), Error);
  r.up_to_scale = 0;
  r.coarsest_dims = Dims{0, 4};
  EXPECT_THROW(generate(*bundle_, r), Error);
}

}  // namespace
}  // namespace setgan
