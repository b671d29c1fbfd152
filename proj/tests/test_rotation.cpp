#include <gtest/gtest.h>

#include "dfr/errors.hpp"
#include "dfr/losses.hpp"
#include "dfr/rotation.hpp"
#include "support/test_support.hpp"

using namespace dfr;
using namespace dfr::testing;

namespace {

Tensor4 plane_2x2() { return Tensor4({1, 1, 2, 2}, {1, 2, 3, 4}); }

}  // namespace

TEST(RotateFeature, ZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor4 x = random_tensor({2, 3, 4, 5}, rng);
  EXPECT_TRUE(bitwise_equal(rotate_feature(x, Angle::k0), x));
}

TEST(RotateFeature, HalfTurnOfSmallPlane) {
  EXPECT_EQ(rotate_feature(plane_2x2(), Angle::k180), Tensor4({1, 1, 2, 2}, {4, 3, 2, 1}));
}

TEST(RotateFeature, QuarterTurnMatchesPermutationOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor4 x = random_tensor({1, 1, 2, 3}, rng);
    const Tensor4 r = rotate_feature(x, Angle::k90);
    EXPECT_EQ(r.shape(), (Shape4{1, 1, 3, 2}));
    EXPECT_TRUE(bitwise_equal(r, oracle_rot90(x)));
  }
  const Tensor4 multi = random_tensor({2, 3, 5, 7}, rng);
  EXPECT_TRUE(bitwise_equal(rotate_feature(multi, Angle::k90), oracle_rot90(multi)));
}

TEST(RotateFeature, CounterClockwiseConvention) {
  // [[1,2],[3,4]] turned a quarter counter-clockwise puts 2 at the top left.
  EXPECT_EQ(rotate_feature(plane_2x2(), Angle::k90), Tensor4({1, 1, 2, 2}, {2, 4, 1, 3}));
  EXPECT_EQ(rotate_feature(plane_2x2(), Angle::k270), Tensor4({1, 1, 2, 2}, {3, 1, 4, 2}));
}

TEST(RotateFeature, GroupLawsOnSquarePlanes) {
  std::mt19937_64 rng(3);
  for (int size : {1, 2, 3, 6, 9}) {
    const Tensor4 x = random_tensor({1, 4, size, size}, rng);
    const Tensor4 r90 = rotate_feature(x, Angle::k90);
    EXPECT_TRUE(bitwise_equal(rotate_feature(r90, Angle::k90), rotate_feature(x, Angle::k180)));
    Tensor4 r = x;
    for (int i = 0; i < 4; ++i) r = rotate_feature(r, Angle::k90);
    EXPECT_TRUE(bitwise_equal(r, x));
    EXPECT_TRUE(bitwise_equal(rotate_feature(r90, Angle::k270), x));
    EXPECT_TRUE(bitwise_equal(rotate_feature(rotate_feature(x, Angle::k270), Angle::k90), x));
  }
}

TEST(RotateFeature, NonSquareCompositions) {
  std::mt19937_64 rng(4);
  const Tensor4 x = random_tensor({1, 2, 3, 5}, rng);
  EXPECT_TRUE(bitwise_equal(rotate_feature(rotate_feature(x, Angle::k90), Angle::k90),
                            rotate_feature(x, Angle::k180)));
  EXPECT_EQ(rotate_feature(x, Angle::k270).shape(), (Shape4{1, 2, 5, 3}));
  EXPECT_TRUE(bitwise_equal(rotate_feature(rotate_feature(x, Angle::k180), Angle::k180), x));
}

TEST(AngleConfig, ParsingAndValidation) {
  EXPECT_EQ(angle_from_degrees(270), Angle::k270);
  EXPECT_THROW(angle_from_degrees(45), ConfigError);
  EXPECT_THROW(angle_from_degrees(360), ConfigError);
  EXPECT_THROW(RotationConfig(Angle::k90, 1.5f), ConfigError);
  EXPECT_THROW(RotationConfig(Angle::k90, -0.1f), ConfigError);
  EXPECT_EQ(apply_to_from_string("style_only"), ApplyTo::kStyleOnly);
  EXPECT_EQ(to_string(ApplyTo::kContentOnly), "content_only");
  EXPECT_THROW(apply_to_from_string("neither"), ConfigError);
  EXPECT_EQ(RotationConfig().apply_to(), ApplyTo::kBoth);
}

TEST(MakeTarget, LambdaZeroReturnsInputForEveryAngle) {
  std::mt19937_64 rng(5);
  const Tensor4 x = random_tensor({1, 3, 4, 6}, rng);
  for (Angle a : {Angle::k0, Angle::k90, Angle::k180, Angle::k270}) {
    EXPECT_TRUE(bitwise_equal(make_target(x, RotationConfig(a, 0.0f)), x));
  }
}

TEST(MakeTarget, LambdaOneReturnsRotation) {
  std::mt19937_64 rng(6);
  const Tensor4 x = random_tensor({1, 3, 4, 6}, rng);
  EXPECT_TRUE(bitwise_equal(make_target(x, RotationConfig(Angle::k180, 1.0f)),
                            rotate_feature(x, Angle::k180)));
  const Tensor4 sq = random_tensor({1, 3, 5, 5}, rng);
  EXPECT_TRUE(bitwise_equal(make_target(sq, RotationConfig(Angle::k90, 1.0f)),
                            rotate_feature(sq, Angle::k90)));
}

TEST(MakeTarget, HalfBlendOfHalfTurn) {
  const Tensor4 t = make_target(plane_2x2(), RotationConfig(Angle::k180, 0.5f));
  for (float v : t.values()) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(MakeTarget, ShapeAlwaysPreserved) {
  std::mt19937_64 rng(7);
  for (Shape4 s : {Shape4{1, 2, 4, 6}, Shape4{1, 1, 7, 3}, Shape4{2, 3, 5, 5}, Shape4{1, 1, 1, 4}}) {
    const Tensor4 x = random_tensor(s, rng);
    for (Angle a : {Angle::k0, Angle::k90, Angle::k180, Angle::k270})
      for (float l : {0.0f, 0.3f, 1.0f}) EXPECT_EQ(make_target(x, RotationConfig(a, l)).shape(), s);
  }
}

TEST(MakeTarget, AffineInLambda) {
  std::mt19937_64 rng(8);
  const Tensor4 x = random_tensor({1, 2, 4, 6}, rng);
  const Tensor4 wr = make_target(x, RotationConfig(Angle::k90, 1.0f));
  const float spread = max_abs_diff(x, wr);
  for (float l = 0.0f; l < 0.95f; l += 0.1f) {
    const float d = 0.05f;
    const Tensor4 a = make_target(x, RotationConfig(Angle::k90, l));
    const Tensor4 b = make_target(x, RotationConfig(Angle::k90, l + d));
    EXPECT_LE(max_abs_diff(a, b), d * spread * (1.0f + 1e-4f) + 1e-6f);
  }
}

TEST(MakeTarget, NonSquareQuarterTurnIsResizedBack) {
  std::mt19937_64 rng(9);
  const Tensor4 x = random_tensor({1, 1, 3, 5}, rng);
  const Tensor4 expected = oracle_resize(oracle_rot90(x), 3, 5);
  const Tensor4 got = make_target(x, RotationConfig(Angle::k90, 1.0f));
  EXPECT_LT(max_abs_diff(got, expected), 1e-6f);
}

namespace {

FeatureMap random_features(std::mt19937_64& rng, Shape4 s = {1, 2, 4, 6}) {
  FeatureMap m;
  m.emplace("conv1_1", random_tensor(s, rng));
  m.emplace("conv4_2", random_tensor({1, 3, 2, 2}, rng));
  return m;
}

}  // namespace

TEST(BuildLossTargets, ZeroAngleIsIdentity) {
  std::mt19937_64 rng(10);
  const FeatureMap c = random_features(rng);
  const FeatureMap s = random_features(rng);
  const LossTargets t = build_loss_targets(c, s, RotationConfig(Angle::k0, 0.7f));
  for (const auto& [k, v] : c) EXPECT_TRUE(bitwise_equal(t.content.at(k), v));
  for (const auto& [k, v] : s) EXPECT_TRUE(bitwise_equal(t.style.at(k), v));
}

TEST(BuildLossTargets, StyleOnlyLeavesContent) {
  std::mt19937_64 rng(11);
  const FeatureMap c = random_features(rng);
  const FeatureMap s = random_features(rng);
  const LossTargets t =
      build_loss_targets(c, s, RotationConfig(Angle::k180, 1.0f, ApplyTo::kStyleOnly));
  for (const auto& [k, v] : c) EXPECT_TRUE(bitwise_equal(t.content.at(k), v));
  for (const auto& [k, v] : s)
    EXPECT_TRUE(bitwise_equal(t.style.at(k), rotate_feature(v, Angle::k180)));
}

TEST(BuildLossTargets, ContentOnlyLeavesStyle) {
  std::mt19937_64 rng(12);
  const FeatureMap c = random_features(rng);
  const FeatureMap s = random_features(rng);
  const LossTargets t =
      build_loss_targets(c, s, RotationConfig(Angle::k180, 1.0f, ApplyTo::kContentOnly));
  for (const auto& [k, v] : s) EXPECT_TRUE(bitwise_equal(t.style.at(k), v));
  for (const auto& [k, v] : c)
    EXPECT_TRUE(bitwise_equal(t.content.at(k), rotate_feature(v, Angle::k180)));
}

TEST(BuildLossTargets, QuarterHalfBothMatchesStepwiseOracle) {
  std::mt19937_64 rng(13);
  const FeatureMap c = random_features(rng);
  const FeatureMap s = random_features(rng);
  const LossTargets t = build_loss_targets(c, s, RotationConfig(Angle::k90, 0.5f));
  auto oracle = [](const Tensor4& w) {
    const Tensor4 r = oracle_resize(oracle_rot90(w), w.h(), w.w());
    Tensor4 out(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = 0.5f * w[i] + 0.5f * r[i];
    return out;
  };
  for (const auto& [k, v] : c) EXPECT_LT(max_abs_diff(t.content.at(k), oracle(v)), 1e-6f) << k;
  for (const auto& [k, v] : s) EXPECT_LT(max_abs_diff(t.style.at(k), oracle(v)), 1e-6f) << k;
  EXPECT_EQ(t.style.at("conv1_1").shape(), (Shape4{1, 2, 4, 6}));
}

TEST(BuildLossTargets, LayerMismatchIsConfigError) {
  std::mt19937_64 rng(14);
  const FeatureMap c = random_features(rng);
  FeatureMap s = random_features(rng);
  s.erase("conv4_2");
  EXPECT_THROW(build_loss_targets(c, s, RotationConfig(Angle::k90, 1.0f)), ConfigError);
  FeatureMap s2 = random_features(rng);
  s2["conv1_1"] = random_tensor({1, 5, 4, 6}, rng);
  EXPECT_THROW(build_loss_targets(c, s2, RotationConfig(Angle::k90, 1.0f)), ConfigError);
}

TEST(GramInvariance, HalfTurnOnAnyPlaneQuarterTurnOnSquare) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor4 x = random_tensor({1, 5, 3 + trial % 4, 4 + trial % 3}, rng);
    EXPECT_EQ(gram(rotate_feature(x, Angle::k180)).values, gram(x).values);
    const Tensor4 sq = random_tensor({1, 5, 2 + trial % 5, 2 + trial % 5}, rng);
    EXPECT_EQ(gram(rotate_feature(sq, Angle::k90)).values, gram(sq).values);
    EXPECT_EQ(gram(rotate_feature(sq, Angle::k270)).values, gram(sq).values);
  }
}

TEST(GramInvariance, StyleOnlyHalfTurnReproducesBaselineGrams) {
  std::mt19937_64 rng(16);
  const FeatureMap c = random_features(rng);
  const FeatureMap s = random_features(rng);
  LayerSelection sel;
  sel.content_layer = "conv4_2";
  sel.style_layers = {"conv1_1"};
  sel.style_layer_weights = {1.0f};
  const LossTargets base = build_loss_targets(c, s, RotationConfig(Angle::k0, 0.0f));
  const LossTargets rot =
      build_loss_targets(c, s, RotationConfig(Angle::k180, 1.0f, ApplyTo::kStyleOnly));
  EXPECT_EQ(target_grams(rot.style, sel).at("conv1_1").values,
            target_grams(base.style, sel).at("conv1_1").values);
}
