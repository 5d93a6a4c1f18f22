#include "hmpe/heatmap.hpp"

#include <algorithm>
#include <stdexcept>

namespace hmpe {

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(static_cast<double>(a[i]) + b[i]);
  return out;
}

}  // namespace

Tensor grad_weight_coeffs(const ClassHead& head, const Tensor& activations) {
  return add(class_partials(head, activations, 2), class_partials(head, activations, 3));
}

Tensor channel_importance(const Tensor& alpha, const Tensor& grad1) {
  require_rank(alpha, 3, "channel_importance alpha");
  require_same_shape(alpha, grad1, "channel_importance");
  const std::size_t k = alpha.dim(0);
  const std::size_t plane = alpha.dim(1) * alpha.dim(2);
  Tensor beta({k});
  for (std::size_t c = 0; c < k; ++c) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = c * plane + p;
      acc += static_cast<double>(alpha[i]) * std::max(0.0, static_cast<double>(grad1[i]));
    }
    beta[c] = static_cast<float>(acc);
  }
  require_finite(beta, "channel_importance");
  return beta;
}

Tensor class_heatmap(const Tensor& beta, const Tensor& activations) {
  require_rank(activations, 3, "class_heatmap activations");
  require_rank(beta, 1, "class_heatmap beta");
  const std::size_t k = activations.dim(0);
  if (beta.dim(0) != k) {
    throw ShapeError("class_heatmap: beta " + shape_to_string(beta.shape()) + " vs activations " +
                     shape_to_string(activations.shape()));
  }
  const std::size_t h = activations.dim(1);
  const std::size_t w = activations.dim(2);
  Tensor out({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += static_cast<double>(beta[c]) * activations.at(c, i, j);
      out.at(i, j) = static_cast<float>(std::max(0.0, acc));
    }
  }
  require_finite(out, "class_heatmap");
  return out;
}

GradWeights class_grad_weights(const ClassHead& head, const Tensor& activations) {
  require_rank(activations, 3, "class heatmap activations");
  GradWeights gw;
  gw.alpha = grad_weight_coeffs(head, activations);
  gw.beta = channel_importance(gw.alpha, class_partials(head, activations, 1));
  return gw;
}

GradWeights bbox_grad_weights(const BboxHead& head, const Tensor& activations, const BoxTarget& target,
                              BboxGradMode mode) {
  require_rank(activations, 3, "bbox heatmap activations");
  GradWeights gw;
  if (mode == BboxGradMode::Mixed) {
    gw.alpha = add(reg_partials(head, activations, target, 2), reg_partials(head, activations, target, 3));
  } else {
    gw.alpha = Tensor(activations.shape(), 1.0F);
  }
  gw.beta = channel_importance(gw.alpha, reg_partials(head, activations, target, 1));
  return gw;
}

Tensor bbox_heatmap(const BboxHead& head, const Tensor& activations, const BoxTarget& target, BboxGradMode mode) {
  return class_heatmap(bbox_grad_weights(head, activations, target, mode).beta, activations);
}

Tensor mix_heatmaps(const Tensor& h_class, const Tensor& h_bbox, float lambda) {
  require_same_shape(h_class, h_bbox, "mix_heatmaps");
  if (!(lambda >= 0.0F && lambda <= 1.0F)) throw std::invalid_argument("mix_heatmaps: lambda must lie in [0, 1]");
  Tensor out(h_class.shape());
  const double l = lambda;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(l * h_class[i] + (1.0 - l) * h_bbox[i]);
  }
  return out;
}

Tensor normalize_heatmap(const Tensor& h) {
  const auto [lo_it, hi_it] = std::minmax_element(h.data().begin(), h.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Tensor out(h.shape());
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>((h[i] - lo) / range);
  return out;
}

HeatmapTriplet build_triplet(const ClassHead& class_head, const BboxHead& bbox_head, const Tensor& activations,
                             const BoxTarget& target, float lambda, BboxGradMode mode) {
  HeatmapTriplet t;
  t.lambda = lambda;
  t.h_class = normalize_heatmap(class_heatmap(class_grad_weights(class_head, activations).beta, activations));
  t.h_bbox = normalize_heatmap(bbox_heatmap(bbox_head, activations, target, mode));
  t.h_mixed = mix_heatmaps(t.h_class, t.h_bbox, lambda);
  return t;
}

}  // namespace hmpe
