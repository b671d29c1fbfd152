#pragma once

#include <map>
#include <string>
#include <vector>

#include "dfr/tensor.hpp"
#include "dfr/vgg.hpp"

namespace dfr {

// Unnormalised channel correlation F * F^T over the h*w positions.
struct GramMatrix {
  int c = 0;
  std::vector<float> values;  // c*c, row-major, exactly symmetric

  float at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * c + j];
  }
};

using GramMap = std::map<std::string, GramMatrix, std::less<>>;

struct LossWeights {
  float alpha = 1e4f;  // content
  float beta = 0.01f;  // style

  void validate() const;
};

struct LossReport {
  float total = 0.0f;
  float content = 0.0f;
  float style = 0.0f;
  std::vector<float> per_style_layer;  // weighted, in selection order
};

// Products are accumulated in double, so the result depends only on the
// multiset of spatial positions, not their order.
GramMatrix gram(const Tensor4& f);

GramMap target_grams(const FeatureMap& style_targets, const LayerSelection& selection);

struct ContentLoss {
  double loss = 0.0;
  Tensor4 grad;
};

// 0.5 * ||f - target||^2 and its gradient f - target.
ContentLoss content_loss(const Tensor4& f, const Tensor4& target);

struct StyleLoss {
  double loss = 0.0;
  std::vector<double> per_layer;
  FeatureMap grads;
};

// sum_l w_l / (4 D_l^2 M_l^2) * ||G_l - G_l_target||_F^2 with per-layer
// feature gradients w_l / (D_l^2 M_l^2) * (G_l - G_l_target) * F_l.
StyleLoss style_loss(const FeatureMap& feats, const GramMap& targets,
                     const LayerSelection& selection);

struct TotalLoss {
  LossReport report;
  FeatureMap grads;  // alpha/beta-scaled, accumulated where roles overlap
};

TotalLoss total_loss(const FeatureMap& feats_of_x, const FeatureMap& content_target,
                     const GramMap& style_target_grams, const LossWeights& weights,
                     const LayerSelection& selection);

}  // namespace dfr
