#include <gtest/gtest.h>

#include <cmath>

#include "setgan/editor_apps.hpp"
#include "setgan/error.hpp"
#include "setgan/inference.hpp"
#include "setgan/pyramid.hpp"
#include "textures.hpp"

namespace setgan {
namespace {

class EditorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bundle_ = new TrainedBundle(testing::toy_bundle(48, 20, 4)); }
  static void TearDownTestSuite() { delete bundle_; }
  static TrainedBundle* bundle_;
  static Dims finest() { return bundle_->manifest.schedule.finest(); }
};
TrainedBundle* EditorTest::bundle_ = nullptr;

TEST(EditKindTest, ParseAndName) {
  for (EditKind k : {EditKind::kSuperResolution, EditKind::kPaint2Image, EditKind::kHarmonization,
                     EditKind::kEditing}) {
    EXPECT_EQ(parse_edit_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_edit_kind("sr"), EditKind::kSuperResolution);
  EXPECT_THROW(parse_edit_kind("blur"), Error);
}

TEST(DilateTest, DiscOfRadius) {
  Mask m(21, 21);
  m.at(10, 10) = 1;
  const Mask d = dilate(m, 3);
  for (int y = 0; y < 21; ++y) {
    for (int x = 0; x < 21; ++x) {
      const int dy = y - 10, dx = x - 10;
      EXPECT_EQ(d.editable(y, x), dx * dx + dy * dy <= 9) << y << ',' << x;
    }
  }
  EXPECT_EQ(dilate(Mask(5, 5), 8).count_editable(), 0u);
}

TEST_F(EditorTest, SuperResolutionDimsAreExact) {
  const double r = bundle_->factor();
  const ImageGrid low = testing::make_texture({30, 22}, 5);
  for (int k = 1; k <= 3; ++k) {
    const double s = std::pow(r, k);
    const EditResult out = super_resolution(*bundle_, low, s, k, 1);
    EXPECT_EQ(out.image.dims(), (Dims{round_dim(30 * s), round_dim(22 * s)})) << k;
  }
}

TEST_F(EditorTest, SuperResolutionRejectsMismatchedFactor) {
  const ImageGrid low = testing::make_texture({16, 16}, 5);
  try {
    super_resolution(*bundle_, low, 4.0, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_NE(std::string(e.what()).find("retrain"), std::string::npos);
  }
  EXPECT_THROW(super_resolution(*bundle_, low, 1.0, 1, 1), Error);
}

TEST_F(EditorTest, MaskedAppsAreBitExactOutsideDilatedMask) {
  const int top = bundle_->scale_count() - 1;
  const auto [composite, mask] = testing::make_composite(testing::make_texture(finest(), 8));
  const Mask region = dilate(mask, kMaskDilationRadius);
  for (const EditResult& out : {harmonize(*bundle_, composite, mask, top, 3),
                                edit(*bundle_, composite, mask, 2, 3)}) {
    ASSERT_EQ(out.image.dims(), composite.dims());
    std::size_t changed_inside = 0;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < composite.height(); ++y) {
        for (int x = 0; x < composite.width(); ++x) {
          if (region.editable(y, x)) {
            changed_inside += out.image.at(c, y, x) != composite.at(c, y, x);
          } else {
            ASSERT_EQ(out.image.at(c, y, x), composite.at(c, y, x));
          }
        }
      }
    }
    EXPECT_GT(changed_inside, 0u);
  }
}

TEST_F(EditorTest, EmptyMaskIsIdentity) {
  const ImageGrid img = testing::make_texture(finest(), 8);
  const Mask none(img.height(), img.width());
  EXPECT_EQ(harmonize(*bundle_, img, none, bundle_->scale_count() - 1, 1).image, img);
  EXPECT_EQ(edit(*bundle_, img, none, 2, 1).image, img);
}

TEST_F(EditorTest, FullMaskEqualsPlainInjection) {
  const ImageGrid img = testing::make_texture(finest(), 8);
  const Mask all(img.height(), img.width(), 255);
  const int top = bundle_->scale_count() - 1;
  EXPECT_EQ(edit(*bundle_, img, all, 2, 6).image, inject(*bundle_, img, 2, top, 6));
}

TEST_F(EditorTest, ScaleRangesAndWarnings) {
  const ImageGrid img = testing::make_texture(finest(), 8);
  const Mask mask(img.height(), img.width());
  const int top = bundle_->scale_count() - 1;
  EXPECT_THROW(harmonize(*bundle_, img, mask, top - 3, 1), Error);
  EXPECT_THROW(edit(*bundle_, img, mask, 0, 1), Error);
  EXPECT_THROW(edit(*bundle_, img, Mask(3, 3), 2, 1), Error);
  EXPECT_FALSE(edit(*bundle_, img, mask, 1, 1).warnings.empty());
  EXPECT_TRUE(edit(*bundle_, img, mask, 3, 1).warnings.empty());

  const ImageGrid clip = testing::make_clipart(finest());
  const EditResult p = paint2image(*bundle_, clip, 5, 1);
  EXPECT_EQ(p.at_scale, 2);
  EXPECT_EQ(p.warnings.size(), 1u);
  EXPECT_EQ(p.image.dims(), finest());
  EXPECT_TRUE(paint2image(*bundle_, clip, 1, 1).warnings.empty());
  EXPECT_NE(paint2image(*bundle_, clip, 1, 1).image, paint2image(*bundle_, clip, 2, 1).image);
}

}  // namespace
}  // namespace setgan
