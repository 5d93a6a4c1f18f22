#include "hmpe/heads.hpp"

#include <cmath>
#include <stdexcept>

#include "hmpe/hmpt_io.hpp"
#include "hmpe/kv.hpp"

namespace hmpe {

namespace {

void check_order(int order, const char* what) {
  if (order < 1 || order > 3) throw std::invalid_argument(std::string(what) + ": order must be 1, 2 or 3");
}

void check_class_shapes(const ClassHead& head, const Tensor& a) {
  require_same_shape(head.weights, a, "class head weights vs activations");
}

void check_bbox_shapes(const BboxHead& head, const Tensor& a) {
  if (head.weights.rank() != a.rank() + 1 || head.weights.dim(0) != 4 ||
      Shape(head.weights.shape().begin() + 1, head.weights.shape().end()) != a.shape()) {
    throw ShapeError("bbox head weights " + shape_to_string(head.weights.shape()) +
                     " incompatible with activations " + shape_to_string(a.shape()));
  }
  if (head.bias.rank() != 1 || head.bias.dim(0) != 4) {
    throw ShapeError("bbox head bias must have shape (4), got " + shape_to_string(head.bias.shape()));
  }
  if (!(head.delta > 0.0F)) throw std::invalid_argument("bbox head: huber delta must be positive");
}

double dot(std::span<const float> w, std::span<const float> a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(w[i]) * a[i];
  return acc;
}

double dot(std::span<const float> w, std::span<const double> a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(w[i]) * a[i];
  return acc;
}

// tanh and its first three derivatives expressed through t = tanh(s).
double tanh_derivative(double t, int order) {
  const double g1 = 1.0 - t * t;
  switch (order) {
    case 1: return g1;
    case 2: return -2.0 * t * g1;
    default: return g1 * (6.0 * t * t - 2.0);
  }
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

struct SigmoidDerivs {
  double d1, d2, d3;
};

SigmoidDerivs sigmoid_derivs(double s) {
  const double d1 = s * (1.0 - s);
  return {d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * s + 6.0 * s * s)};
}

std::span<const float> coord_weights(const BboxHead& head, std::size_t c) {
  const std::size_t n = head.weights.size() / 4;
  return head.weights.data().subspan(c * n, n);
}

}  // namespace

ClassHead ClassHead::random(const Shape& activation_shape, Rng& rng, double weight_std, float bias) {
  return ClassHead{rng.normal_tensor(activation_shape, weight_std), bias};
}

BboxHead BboxHead::random(const Shape& activation_shape, Rng& rng, double weight_std, float delta,
                          double bias_std) {
  Shape ws{4};
  ws.insert(ws.end(), activation_shape.begin(), activation_shape.end());
  BboxHead head;
  head.weights = rng.normal_tensor(ws, weight_std);
  head.bias = bias_std > 0.0 ? rng.normal_tensor({4}, bias_std) : Tensor({4});
  head.delta = delta;
  return head;
}

void BoxTarget::validate() const {
  for (float v : as_array()) {
    if (!(v >= 0.0F && v <= 1.0F)) throw std::invalid_argument("box target fields must lie in [0, 1]");
  }
  if (!(w > 0.0F && h > 0.0F)) throw std::invalid_argument("box target width and height must be positive");
}

bool BoxTarget::contains(float x, float y) const {
  return std::abs(x - cx) <= 0.5F * w && std::abs(y - cy) <= 0.5F * h;
}

float class_score(const ClassHead& head, const Tensor& activations) {
  check_class_shapes(head, activations);
  return static_cast<float>(std::tanh(dot(head.weights.data(), activations.data()) + head.bias));
}

double class_score_f64(const ClassHead& head, std::span<const double> activations) {
  if (activations.size() != head.weights.size()) throw ShapeError("class_score_f64: length mismatch");
  return std::tanh(dot(head.weights.data(), activations) + head.bias);
}

Tensor class_partials(const ClassHead& head, const Tensor& activations, int order) {
  check_order(order, "class_partials");
  check_class_shapes(head, activations);
  const double t = std::tanh(dot(head.weights.data(), activations.data()) + head.bias);
  const double g = tanh_derivative(t, order);
  Tensor out(activations.shape());
  const auto w = head.weights.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(g * std::pow(static_cast<double>(w[i]), order));
  return out;
}

double huber(double residual, double delta) {
  const double a = std::abs(residual);
  return a <= delta ? 0.5 * residual * residual : delta * (a - 0.5 * delta);
}

double huber_grad(double residual, double delta) {
  if (residual > delta) return delta;
  if (residual < -delta) return -delta;
  return residual;
}

std::array<float, 4> bbox_predict(const BboxHead& head, const Tensor& activations) {
  check_bbox_shapes(head, activations);
  std::array<float, 4> pred{};
  for (std::size_t c = 0; c < 4; ++c)
    pred[c] = static_cast<float>(sigmoid(dot(coord_weights(head, c), activations.data()) + head.bias[c]));
  return pred;
}

float reg_loss(const BboxHead& head, const Tensor& activations, const BoxTarget& target) {
  check_bbox_shapes(head, activations);
  std::vector<double> a(activations.data().begin(), activations.data().end());
  return static_cast<float>(reg_loss_f64(head, a, target));
}

double reg_loss_f64(const BboxHead& head, std::span<const double> activations, const BoxTarget& target) {
  if (activations.size() * 4 != head.weights.size()) throw ShapeError("reg_loss_f64: length mismatch");
  const auto t = target.as_array();
  double loss = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double pred = sigmoid(dot(coord_weights(head, c), activations) + head.bias[c]);
    loss += huber(pred - t[c], head.delta);
  }
  return loss;
}

Tensor reg_partials(const BboxHead& head, const Tensor& activations, const BoxTarget& target, int order) {
  check_order(order, "reg_partials");
  check_bbox_shapes(head, activations);
  const auto t = target.as_array();
  // Per-coordinate chain factor multiplying W^order.
  std::array<double, 4> factor{};
  for (std::size_t c = 0; c < 4; ++c) {
    const double s = sigmoid(dot(coord_weights(head, c), activations.data()) + head.bias[c]);
    const double r = s - t[c];
    const double h1 = huber_grad(r, head.delta);
    const double h2 = std::abs(r) <= head.delta ? 1.0 : 0.0;
    const auto d = sigmoid_derivs(s);
    switch (order) {
      case 1: factor[c] = h1 * d.d1; break;
      case 2: factor[c] = h2 * d.d1 * d.d1 + h1 * d.d2; break;
      default: factor[c] = 3.0 * h2 * d.d1 * d.d2 + h1 * d.d3; break;
    }
  }
  Tensor out(activations.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 4; ++c) acc += factor[c] * std::pow(static_cast<double>(coord_weights(head, c)[i]), order);
    out[i] = static_cast<float>(acc);
  }
  return out;
}

std::filesystem::path head_sidecar_path(const std::filesystem::path& weights_path) {
  auto p = weights_path;
  p.replace_extension(".txt");
  return p;
}

void save_class_head(const std::filesystem::path& path, const ClassHead& head) {
  write_hmpt(path, head.weights);
  write_text_file(head_sidecar_path(path), format_key_values({{"bias", format_float(head.bias)}}));
}

ClassHead load_class_head(const std::filesystem::path& path) {
  ClassHead head;
  head.weights = read_hmpt(path);
  const auto kv = read_key_values(head_sidecar_path(path));
  if (auto it = kv.find("bias"); it != kv.end()) head.bias = static_cast<float>(parse_number(it->second, "bias"));
  return head;
}

void save_bbox_head(const std::filesystem::path& path, const BboxHead& head) {
  write_hmpt(path, head.weights);
  std::string bias;
  for (std::size_t c = 0; c < 4; ++c) bias += (c ? "," : "") + format_float(head.bias[c]);
  write_text_file(head_sidecar_path(path), format_key_values({{"bias", bias}, {"delta", format_float(head.delta)}}));
}

BboxHead load_bbox_head(const std::filesystem::path& path) {
  BboxHead head;
  head.weights = read_hmpt(path);
  head.bias = Tensor({4});
  const auto kv = read_key_values(head_sidecar_path(path));
  if (auto it = kv.find("bias"); it != kv.end()) {
    const auto b = parse_number_list(it->second);
    if (b.size() != 4) throw std::invalid_argument("bbox head sidecar: bias needs 4 values");
    for (std::size_t c = 0; c < 4; ++c) head.bias[c] = static_cast<float>(b[c]);
  }
  if (auto it = kv.find("delta"); it != kv.end()) head.delta = static_cast<float>(parse_number(it->second, "delta"));
  if (!(head.delta > 0.0F)) throw std::invalid_argument("bbox head sidecar: delta must be positive");
  return head;
}

BoxTarget parse_box_target(const std::string& text) {
  const auto v = parse_number_list(text);
  if (v.size() != 4) throw std::invalid_argument("target must be 'cx,cy,w,h'");
  BoxTarget t{static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2]), static_cast<float>(v[3])};
  t.validate();
  return t;
}

}  // namespace hmpe
