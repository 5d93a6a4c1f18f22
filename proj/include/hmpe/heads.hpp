#pragma once

#include <array>
#include <filesystem>
#include <span>

#include "hmpe/rng.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

/// Toy confidence head: y = tanh(<weights, A> + bias). tanh rather than a
/// piecewise-linear activation so the second and third same-element partials
/// do not vanish.
struct ClassHead {
  Tensor weights;  // (K, H, W), matches the activation tensor it scores
  float bias = 0.0F;

  static ClassHead random(const Shape& activation_shape, Rng& rng, double weight_std, float bias);
};

/// Ground-truth box in normalized image units.
struct BoxTarget {
  float cx = 0.5F;
  float cy = 0.5F;
  float w = 0.25F;
  float h = 0.25F;

  std::array<float, 4> as_array() const { return {cx, cy, w, h}; }
  /// Throws std::invalid_argument unless all fields lie in [0, 1] and w, h > 0.
  void validate() const;
  bool contains(float x, float y) const;
};

/// Toy box regressor: pred_c = sigmoid(<weights[c], A> + bias[c]) for
/// c in (cx, cy, w, h); loss is the Huber sum over the four residuals.
struct BboxHead {
  Tensor weights;  // (4, K, H, W)
  Tensor bias;     // (4)
  float delta = 1.0F;

  static BboxHead random(const Shape& activation_shape, Rng& rng, double weight_std, float delta,
                         double bias_std = 0.5);
};

float class_score(const ClassHead& head, const Tensor& activations);
/// Same score evaluated fully in f64 over a flattened activation vector.
double class_score_f64(const ClassHead& head, std::span<const double> activations);

/// Closed-form same-element partials d^order y / dA_e^order, order in {1,2,3}.
Tensor class_partials(const ClassHead& head, const Tensor& activations, int order);

double huber(double residual, double delta);
double huber_grad(double residual, double delta);

std::array<float, 4> bbox_predict(const BboxHead& head, const Tensor& activations);
float reg_loss(const BboxHead& head, const Tensor& activations, const BoxTarget& target);
double reg_loss_f64(const BboxHead& head, std::span<const double> activations, const BoxTarget& target);

/// Closed-form same-element partials of the regression loss, chained through
/// the sigmoid squashing and the active Huber branch.
Tensor reg_partials(const BboxHead& head, const Tensor& activations, const BoxTarget& target, int order);

// Weights go to an HMPT file; scalars to a key=value sidecar next to it
// (same stem, ".txt" extension).
std::filesystem::path head_sidecar_path(const std::filesystem::path& weights_path);
void save_class_head(const std::filesystem::path& path, const ClassHead& head);
ClassHead load_class_head(const std::filesystem::path& path);
void save_bbox_head(const std::filesystem::path& path, const BboxHead& head);
BboxHead load_bbox_head(const std::filesystem::path& path);

/// Parses "cx,cy,w,h".
BoxTarget parse_box_target(const std::string& text);

}  // namespace hmpe
