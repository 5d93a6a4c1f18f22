#pragma once

#include "hmpe/heads.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

/// Derivative structure used to weight the bbox heatmap.
enum class BboxGradMode {
  Mixed,      // second + third order partials, same as the class path
  FirstOrder  // alpha == 1: beta is the spatial sum of ReLU'd first partials
};

struct GradWeights {
  Tensor alpha;  // (K, H, W)
  Tensor beta;   // (K)
};

struct HeatmapTriplet {
  Tensor h_class;  // (H, W), >= 0
  Tensor h_bbox;   // (H, W), >= 0
  Tensor h_mixed;  // lambda * h_class + (1 - lambda) * h_bbox
  float lambda = 0.5F;
};

/// alpha = d2y/dA^2 + d3y/dA^3, element-wise.
Tensor grad_weight_coeffs(const ClassHead& head, const Tensor& activations);

/// beta[k] = sum_ij alpha[k,i,j] * max(0, grad1[k,i,j]).
Tensor channel_importance(const Tensor& alpha, const Tensor& grad1);

/// H(i,j) = max(0, sum_k beta[k] * A[k,i,j]).
Tensor class_heatmap(const Tensor& beta, const Tensor& activations);

GradWeights class_grad_weights(const ClassHead& head, const Tensor& activations);
GradWeights bbox_grad_weights(const BboxHead& head, const Tensor& activations, const BoxTarget& target,
                              BboxGradMode mode = BboxGradMode::Mixed);

/// Class-heatmap pipeline with the regression loss standing in for the
/// confidence score.
Tensor bbox_heatmap(const BboxHead& head, const Tensor& activations, const BoxTarget& target,
                    BboxGradMode mode = BboxGradMode::Mixed);

/// Convex combination; lambda outside [0, 1] is rejected.
Tensor mix_heatmaps(const Tensor& h_class, const Tensor& h_bbox, float lambda);

/// Min-max rescale to [0, 1]; a constant map becomes all zeros.
Tensor normalize_heatmap(const Tensor& h);

/// Computes both heatmaps, min-max normalizes each, then mixes. The stored
/// h_class/h_bbox are the normalized maps, so the triplet's convexity
/// invariant holds on what is written out.
HeatmapTriplet build_triplet(const ClassHead& class_head, const BboxHead& bbox_head, const Tensor& activations,
                             const BoxTarget& target, float lambda, BboxGradMode mode = BboxGradMode::Mixed);

}  // namespace hmpe
