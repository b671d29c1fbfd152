#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "dfr/errors.hpp"
#include "dfr/losses.hpp"
#include "dfr/rotation.hpp"
#include "support/reference_net.hpp"
#include "support/test_support.hpp"

using namespace dfr;
using namespace dfr::testing;

namespace {

LayerSelection single_style(const std::string& layer, float w = 1.0f) {
  LayerSelection sel;
  sel.content_layer = layer;
  sel.style_layers = {layer};
  sel.style_layer_weights = {w};
  return sel;
}

// Independent style loss for one layer, all in double from the definition.
double oracle_style_term(const Tensor4& f, const std::vector<double>& target_gram, double w) {
  const std::vector<double> g = naive_gram(f);
  double sq = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) sq += (g[i] - target_gram[i]) * (g[i] - target_gram[i]);
  const double d = f.c();
  const double m = static_cast<double>(f.shape().plane());
  return w / (4.0 * d * d * m * m) * sq;
}

}  // namespace

TEST(Gram, OnesPlane) {
  const GramMatrix g = gram(Tensor4(1, 1, 2, 2, 1.0f));
  ASSERT_EQ(g.c, 1);
  EXPECT_EQ(g.values, std::vector<float>{4.0f});
}

TEST(Gram, OrthogonalChannels) {
  const GramMatrix g = gram(Tensor4({1, 2, 2, 2}, {1, 0, 0, 0, 0, 1, 0, 0}));
  EXPECT_EQ(g.values, (std::vector<float>{1, 0, 0, 1}));
}

TEST(Gram, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor4 f = random_tensor({1, 4, 3, 3}, rng, -2.0f, 2.0f);
    const GramMatrix g = gram(f);
    const auto ref = naive_gram(f);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(g.values[i], ref[i], 1e-4);
  }
}

TEST(Gram, SymmetricAndPositiveSemiDefinite) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 1 + trial % 9;
    const Tensor4 f = random_tensor({1, c, 1 + trial % 4, 1 + trial % 5}, rng, -3.0f, 3.0f);
    const GramMatrix g = gram(f);
    Eigen::MatrixXd m(c, c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) {
        EXPECT_EQ(std::bit_cast<std::uint32_t>(g.at(i, j)), std::bit_cast<std::uint32_t>(g.at(j, i)));
        m(i, j) = g.at(i, j);
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-4);
  }
}

TEST(Gram, InvariantUnderSpatialPermutation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor4 f = random_tensor({1, 6, 5, 7}, rng, -1.0f, 1.0f);
    std::vector<std::size_t> perm(f.shape().plane());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor4 p(f.shape());
    for (int c = 0; c < f.c(); ++c)
      for (std::size_t k = 0; k < perm.size(); ++k) p.plane(0, c)[k] = f.plane(0, c)[perm[k]];
    EXPECT_EQ(gram(p).values, gram(f).values);
  }
}

TEST(ContentLoss, MinimumAndScalarExample) {
  std::mt19937_64 rng(4);
  const Tensor4 f = random_tensor({1, 2, 3, 3}, rng);
  const ContentLoss same = content_loss(f, f);
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_EQ(same.grad, Tensor4(f.shape()));

  const ContentLoss ex = content_loss(Tensor4({1, 1, 1, 1}, {3}), Tensor4({1, 1, 1, 1}, {1}));
  EXPECT_DOUBLE_EQ(ex.loss, 2.0);
  EXPECT_EQ(ex.grad[0], 2.0f);
  EXPECT_THROW(content_loss(f, Tensor4(1, 2, 3, 4)), ConfigError);
}

TEST(ContentLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Tensor4 f = random_tensor({1, 3, 4, 4}, rng);
  const Tensor4 t = random_tensor({1, 3, 4, 4}, rng);
  const Tensor4 fd =
      finite_difference([&](const Tensor4& x) { return content_loss(x, t).loss; }, f, 1e-2f);
  EXPECT_LT(max_rel_error(content_loss(f, t).grad, fd, 1e-3), 1e-3);
}

TEST(StyleLoss, MinimumGivesZero) {
  std::mt19937_64 rng(6);
  const Tensor4 f = random_tensor({1, 3, 4, 4}, rng);
  const LayerSelection sel = single_style("conv1_1");
  const StyleLoss s = style_loss({{"conv1_1", f}}, {{"conv1_1", gram(f)}}, sel);
  EXPECT_EQ(s.loss, 0.0);
  for (float v : s.grads.at("conv1_1").values()) EXPECT_EQ(v, 0.0f);
}

TEST(StyleLoss, HandEvaluatedScaling) {
  const LayerSelection sel = single_style("conv1_1");
  const StyleLoss s =
      style_loss({{"conv1_1", Tensor4(1, 1, 2, 2, 1.0f)}}, {{"conv1_1", GramMatrix{1, {0.0f}}}}, sel);
  EXPECT_DOUBLE_EQ(s.loss, 0.25);
  ASSERT_EQ(s.per_layer.size(), 1u);
  EXPECT_DOUBLE_EQ(s.per_layer[0], 0.25);
}

TEST(StyleLoss, MatchesOracleAcrossWeightedLayers) {
  std::mt19937_64 rng(7);
  LayerSelection sel;
  sel.style_layers = {"conv1_1", "conv2_1"};
  sel.style_layer_weights = {0.5f, 2.0f};
  const Tensor4 f1 = random_tensor({1, 3, 4, 4}, rng);
  const Tensor4 f2 = random_tensor({1, 2, 2, 2}, rng);
  const Tensor4 t1 = random_tensor({1, 3, 4, 4}, rng);
  const Tensor4 t2 = random_tensor({1, 2, 2, 2}, rng);
  const StyleLoss s =
      style_loss({{"conv1_1", f1}, {"conv2_1", f2}}, {{"conv1_1", gram(t1)}, {"conv2_1", gram(t2)}}, sel);
  const double o1 = oracle_style_term(f1, naive_gram(t1), 0.5);
  const double o2 = oracle_style_term(f2, naive_gram(t2), 2.0);
  EXPECT_NEAR(s.per_layer[0], o1, 1e-6 * std::max(1.0, o1));
  EXPECT_NEAR(s.per_layer[1], o2, 1e-6 * std::max(1.0, o2));
  EXPECT_NEAR(s.loss, o1 + o2, 1e-6 * std::max(1.0, o1 + o2));
}

TEST(StyleLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const LayerSelection sel = single_style("conv1_1");
  const Tensor4 f = random_tensor({1, 3, 4, 4}, rng);
  const GramMap targets{{"conv1_1", gram(random_tensor({1, 3, 4, 4}, rng))}};
  const StyleLoss s = style_loss({{"conv1_1", f}}, targets, sel);
  const Tensor4 fd = finite_difference(
      [&](const Tensor4& x) { return style_loss({{"conv1_1", x}}, targets, sel).loss; }, f, 1e-2f);
  EXPECT_LT(max_rel_error(s.grads.at("conv1_1"), fd, 1e-4), 1e-3);
}

TEST(StyleLoss, MismatchesAreConfigErrors) {
  const LayerSelection sel = single_style("conv1_1");
  const Tensor4 f(1, 3, 2, 2, 1.0f);
  EXPECT_THROW(style_loss({{"conv1_1", f}}, {}, sel), ConfigError);
  EXPECT_THROW(style_loss({{"conv1_1", f}}, {{"conv1_1", GramMatrix{2, {0, 0, 0, 0}}}}, sel),
               ConfigError);
  EXPECT_THROW(style_loss({}, {{"conv1_1", gram(f)}}, sel), ConfigError);
}

namespace {

struct SmallProblem {
  LayerSelection sel;
  FeatureMap feats;
  FeatureMap content_target;
  GramMap grams;
};

SmallProblem small_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SmallProblem p;
  p.sel.content_layer = "conv2_1";
  p.sel.style_layers = {"conv1_1", "conv2_1"};
  p.sel.style_layer_weights = {1.0f, 1.0f};
  p.feats.emplace("conv1_1", random_tensor({1, 3, 4, 4}, rng, 0.0f, 1.0f));
  p.feats.emplace("conv2_1", random_tensor({1, 4, 2, 2}, rng, 0.0f, 1.0f));
  p.content_target.emplace("conv2_1", random_tensor({1, 4, 2, 2}, rng, 0.0f, 1.0f));
  p.grams.emplace("conv1_1", gram(random_tensor({1, 3, 4, 4}, rng, 0.0f, 1.0f)));
  p.grams.emplace("conv2_1", gram(random_tensor({1, 4, 2, 2}, rng, 0.0f, 1.0f)));
  return p;
}

}  // namespace

TEST(TotalLoss, ZeroAtJointMinimum) {
  SmallProblem p = small_problem(9);
  p.content_target = {{"conv2_1", p.feats.at("conv2_1")}};
  p.grams = {{"conv1_1", gram(p.feats.at("conv1_1"))}, {"conv2_1", gram(p.feats.at("conv2_1"))}};
  const TotalLoss t = total_loss(p.feats, p.content_target, p.grams, LossWeights{}, p.sel);
  EXPECT_EQ(t.report.total, 0.0f);
  for (const auto& [k, g] : t.grads)
    for (float v : g.values()) EXPECT_EQ(v, 0.0f);
}

TEST(TotalLoss, ZeroAlphaLeavesStyleOnly) {
  const SmallProblem p = small_problem(10);
  const TotalLoss t = total_loss(p.feats, p.content_target, p.grams, LossWeights{0.0f, 0.01f}, p.sel);
  EXPECT_NEAR(t.report.total, 0.01f * t.report.style, 1e-6f * t.report.total);
  EXPECT_GT(t.report.content, 0.0f);
  const StyleLoss s = style_loss(p.feats, p.grams, p.sel);
  for (const auto& [k, g] : t.grads) {
    const Tensor4& sg = s.grads.at(k);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.01f * sg[i], 1e-9f);
  }
}

TEST(TotalLoss, DefaultWeightsCombineIndependentTerms) {
  const SmallProblem p = small_problem(11);
  const LossWeights w;
  EXPECT_FLOAT_EQ(w.alpha, 1e4f);
  EXPECT_FLOAT_EQ(w.beta, 0.01f);
  const TotalLoss t = total_loss(p.feats, p.content_target, p.grams, w, p.sel);

  double c = 0.0;
  const Tensor4& f = p.feats.at("conv2_1");
  const Tensor4& tg = p.content_target.at("conv2_1");
  for (std::size_t i = 0; i < f.size(); ++i) c += 0.5 * (double(f[i]) - tg[i]) * (double(f[i]) - tg[i]);
  double s = 0.0;
  for (const auto& name : p.sel.style_layers) {
    std::vector<double> target(p.grams.at(name).values.begin(), p.grams.at(name).values.end());
    s += oracle_style_term(p.feats.at(name), target, 1.0);
  }
  const double expected = 1e4 * c + 0.01 * s;
  EXPECT_NEAR(t.report.content, c, 1e-5 * c);
  EXPECT_NEAR(t.report.style, s, 1e-5 * s);
  EXPECT_NEAR(t.report.total, expected, 1e-4 * expected);
  EXPECT_NEAR(t.report.total, w.alpha * t.report.content + w.beta * t.report.style,
              1e-4 * t.report.total);
}

TEST(TotalLoss, SharedLayerAccumulatesBothRoles) {
  const SmallProblem p = small_problem(12);
  const LossWeights w{2.0f, 3.0f};
  const TotalLoss t = total_loss(p.feats, p.content_target, p.grams, w, p.sel);
  const ContentLoss c = content_loss(p.feats.at("conv2_1"), p.content_target.at("conv2_1"));
  const StyleLoss s = style_loss(p.feats, p.grams, p.sel);
  const Tensor4& g = t.grads.at("conv2_1");
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], 2.0f * c.grad[i] + 3.0f * s.grads.at("conv2_1")[i], 1e-5f);
  }
}

TEST(TotalLoss, NonNegative) {
  for (std::uint64_t seed = 20; seed < 60; ++seed) {
    const SmallProblem p = small_problem(seed);
    const TotalLoss t = total_loss(p.feats, p.content_target, p.grams, LossWeights{}, p.sel);
    EXPECT_GE(t.report.total, 0.0f);
    EXPECT_GE(t.report.content, 0.0f);
    EXPECT_GE(t.report.style, 0.0f);
  }
}

TEST(TotalLoss, RejectsNegativeWeights) {
  const SmallProblem p = small_problem(13);
  EXPECT_THROW(total_loss(p.feats, p.content_target, p.grams, LossWeights{-1.0f, 0.01f}, p.sel),
               ConfigError);
}

TEST(TotalLoss, EndToEndImageGradientMatchesFiniteDifferences) {
  const VggWeights w = synthetic_vgg_weights(3);
  std::mt19937_64 rng(14);
  const LayerSelection sel;
  const Tensor4 content = random_tensor({1, 3, 16, 16}, rng, -2.0f, 2.0f);
  const Tensor4 style = random_tensor({1, 3, 16, 16}, rng, -2.0f, 2.0f);
  const Tensor4 x = random_tensor({1, 3, 16, 16}, rng, -2.0f, 2.0f);
  const FeatureMap content_feats = extract_features(content, w, sel).features;
  const FeatureMap style_feats = extract_features(style, w, sel).features;
  const LossTargets targets =
      build_loss_targets(content_feats, style_feats, RotationConfig(Angle::k90, 0.5f));
  const GramMap grams = target_grams(targets.style, sel);
  const LossWeights lw;

  const FeatureSet fs = extract_features(x, w, sel);
  const TotalLoss t = total_loss(fs.features, targets.content, grams, lw, sel);
  const Tensor4 analytic = backward_to_image(t.grads, fs.tape, w);
  const ReferenceNet ref(w);
  const auto layers = sel.all_layers();
  const Tensor4 fd = reference_finite_difference(
      [&](const DTensor& p) {
        return reference_objective(ref.forward(p, layers), targets.content, grams, lw, sel);
      },
      x, 1e-5);
  EXPECT_LT(norm_rel_error(analytic, fd), 1e-2);
}
