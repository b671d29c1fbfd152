#include "dfr/losses.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include "dfr/errors.hpp"

namespace dfr {

namespace {

using RowMatF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatD =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const Tensor4& find_layer(const FeatureMap& map, const std::string& name,
                          const char* what) {
  auto it = map.find(name);
  if (it == map.end()) {
    throw ConfigError(fmt::format("{}: layer {} missing", what, name));
  }
  return it->second;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0f) || !(beta >= 0.0f)) {
    throw ConfigError(fmt::format("loss weights must be >= 0 (alpha {}, beta {})", alpha, beta));
  }
}

GramMatrix gram(const Tensor4& f) {
  if (f.n() != 1) {
    throw ConfigError(fmt::format("gram: batch must be 1, got {}", f.shape().str()));
  }
  const int c = f.c();
  const auto m = static_cast<Eigen::Index>(f.h()) * f.w();
  const RowMatD fd = Eigen::Map<const RowMatF>(f.data(), c, m).cast<double>();
  const RowMatD g = fd * fd.transpose();

  GramMatrix out{c, std::vector<float>(static_cast<std::size_t>(c) * c)};
  for (int i = 0; i < c; ++i) {
    for (int j = i; j < c; ++j) {
      const auto v = static_cast<float>(g(i, j));
      out.values[static_cast<std::size_t>(i) * c + j] = v;
      out.values[static_cast<std::size_t>(j) * c + i] = v;
    }
  }
  return out;
}

GramMap target_grams(const FeatureMap& style_targets, const LayerSelection& selection) {
  GramMap out;
  for (const auto& name : selection.style_layers) {
    out.emplace(name, gram(find_layer(style_targets, name, "target_grams")));
  }
  return out;
}

ContentLoss content_loss(const Tensor4& f, const Tensor4& target) {
  require_same_shape(f, target, "content_loss");
  ContentLoss out{0.0, Tensor4(f.shape())};
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const float d = f[i] - target[i];
    out.grad[i] = d;
    sum += static_cast<double>(d) * d;
  }
  out.loss = 0.5 * sum;
  return out;
}

StyleLoss style_loss(const FeatureMap& feats, const GramMap& targets,
                     const LayerSelection& selection) {
  if (selection.style_layer_weights.size() != selection.style_layers.size()) {
    throw ConfigError("style_loss: style layer weights do not match style layers");
  }
  StyleLoss out;
  for (std::size_t l = 0; l < selection.style_layers.size(); ++l) {
    const std::string& name = selection.style_layers[l];
    const Tensor4& f = find_layer(feats, name, "style_loss features");
    auto target_it = targets.find(name);
    if (target_it == targets.end()) {
      throw ConfigError(fmt::format("style_loss: no target Gram for layer {}", name));
    }
    const GramMatrix& target = target_it->second;
    if (target.c != f.c()) {
      throw ConfigError(fmt::format("style_loss: layer {} has {} channels but target Gram is {}x{}",
                                    name, f.c(), target.c, target.c));
    }
    const GramMatrix g = gram(f);
    const int c = f.c();
    const double d = c;
    const double m = static_cast<double>(f.h()) * f.w();
    const double wl = selection.style_layer_weights[l];

    RowMatF diff(c, c);
    double sq = 0.0;
    for (std::size_t k = 0; k < g.values.size(); ++k) {
      const float e = g.values[k] - target.values[k];
      diff.data()[k] = e;
      sq += static_cast<double>(e) * e;
    }
    const double layer_loss = wl / (4.0 * d * d * m * m) * sq;
    out.per_layer.push_back(layer_loss);
    out.loss += layer_loss;

    // d/dF of ||FF^T - T||^2 is 2 (D + D^T) F with D symmetric, i.e. 4 D F.
    const auto scale = static_cast<float>(wl / (d * d * m * m));
    Tensor4 grad(f.shape());
    Eigen::Map<RowMatF> grad_mat(grad.data(), c, static_cast<Eigen::Index>(m));
    grad_mat.noalias() = scale * (diff * Eigen::Map<const RowMatF>(
                                             f.data(), c, static_cast<Eigen::Index>(m)));
    out.grads.emplace(name, std::move(grad));
  }
  return out;
}

TotalLoss total_loss(const FeatureMap& feats_of_x, const FeatureMap& content_target,
                     const GramMap& style_target_grams, const LossWeights& weights,
                     const LayerSelection& selection) {
  weights.validate();
  const Tensor4& fc = find_layer(feats_of_x, selection.content_layer, "total_loss features");
  const Tensor4& tc =
      find_layer(content_target, selection.content_layer, "total_loss content target");
  ContentLoss cl = content_loss(fc, tc);
  StyleLoss sl = style_loss(feats_of_x, style_target_grams, selection);

  TotalLoss out;
  out.report.content = static_cast<float>(cl.loss);
  out.report.style = static_cast<float>(sl.loss);
  out.report.total =
      static_cast<float>(static_cast<double>(weights.alpha) * cl.loss +
                         static_cast<double>(weights.beta) * sl.loss);
  for (double v : sl.per_layer) out.report.per_style_layer.push_back(static_cast<float>(v));

  for (auto& v : cl.grad.values()) v *= weights.alpha;
  out.grads.emplace(selection.content_layer, std::move(cl.grad));
  for (auto& [name, grad] : sl.grads) {
    for (auto& v : grad.values()) v *= weights.beta;
    // try_emplace leaves grad untouched when the layer already holds the content grad.
    auto [it, inserted] = out.grads.try_emplace(name, std::move(grad));
    if (!inserted) {
      for (std::size_t i = 0; i < it->second.size(); ++i) it->second[i] += grad[i];
    }
  }
  return out;
}

}  // namespace dfr
