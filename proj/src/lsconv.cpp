#include "hmpe/lsconv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hmpe/numerics.hpp"

namespace hmpe {

OffsetField OffsetField::zeros(std::size_t height, std::size_t width) {
  return {Tensor({height, width, kPathLength}), Tensor({height, width, kPathLength})};
}

void OffsetField::clamp_displacement() {
  for (auto* t : {&dy_x_path, &dx_y_path})
    for (auto& v : t->data()) v = std::clamp(v, -kDisplacementBound, kDisplacementBound);
}

OffsetPredictor OffsetPredictor::zeros() { return {Tensor({2, 8, 3, 3}), Tensor({2, 8}), 1.0F}; }

OffsetPredictor OffsetPredictor::random(Rng& rng, double weight_std) {
  return {rng.normal_tensor({2, 8, 3, 3}, weight_std), rng.normal_tensor({2, 8}, weight_std), 1.0F};
}

namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t extent) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(extent) - 1));
}

void check_field(const Tensor& feature, const OffsetField& offsets) {
  require_rank(feature, 2, "lsconv feature");
  const Shape expect{feature.dim(0), feature.dim(1), kPathLength};
  if (offsets.dy_x_path.shape() != expect || offsets.dx_y_path.shape() != expect) {
    throw ShapeError("offset field " + shape_to_string(offsets.dy_x_path.shape()) + " does not match feature " +
                     shape_to_string(feature.shape()));
  }
}

double conv3x3(const Tensor& feature, const OffsetPredictor& pred, std::size_t path, std::size_t step, std::size_t i,
               std::size_t j) {
  const std::size_t h = feature.dim(0);
  const std::size_t w = feature.dim(1);
  const auto k = pred.weights.data().subspan((path * 8 + step) * 9, 9);
  double acc = pred.bias.at(path, step);
  for (std::ptrdiff_t di = -1; di <= 1; ++di) {
    for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
      const auto r = clamp_index(static_cast<std::ptrdiff_t>(i) + di, h);
      const auto c = clamp_index(static_cast<std::ptrdiff_t>(j) + dj, w);
      acc += static_cast<double>(k[(di + 1) * 3 + (dj + 1)]) * feature.at(r, c);
    }
  }
  return acc;
}

// Position of slot `slot` on the path through (col, row). `along` is the
// coordinate that advances with c; `across` carries the cumulative offset.
Point2 path_point(std::size_t col, std::size_t row, const Tensor& cum, std::size_t slot, Axis axis, bool unit_shift) {
  const double c = static_cast<double>(slot) - static_cast<double>(kPathCenter);
  const double s = unit_shift ? (c >= 0.0 ? 1.0 : -1.0) : 0.0;
  const double off = cum.at(row, col, slot);
  if (axis == Axis::X) return {static_cast<double>(col) + c + s, static_cast<double>(row) + off + s};
  return {static_cast<double>(col) + off + s, static_cast<double>(row) + c + s};
}

SamplePath make_path(std::size_t col, std::size_t row, const OffsetField& offsets, Axis axis, bool unit_shift) {
  if (row >= offsets.height() || col >= offsets.width()) throw std::out_of_range("snake path center outside grid");
  const Tensor& cum = axis == Axis::X ? offsets.dy_x_path : offsets.dx_y_path;
  SamplePath path;
  for (std::size_t k = 0; k < kPathLength; ++k) path.positions[k] = path_point(col, row, cum, k, axis, unit_shift);
  return path;
}

template <std::size_t N>
Tensor sample_paths(const Tensor& feature, const std::array<float, N>& taps, const OffsetField& offsets, Axis axis,
                    bool unit_shift) {
  check_field(feature, offsets);
  static_assert(N % 2 == 1 && N <= kPathLength);
  const std::size_t first = kPathCenter - N / 2;
  const std::size_t h = feature.dim(0);
  const std::size_t w = feature.dim(1);
  Tensor out({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto path = make_path(j, i, offsets, axis, unit_shift);
      double acc = 0.0;
      for (std::size_t t = 0; t < N; ++t) {
        const auto& p = path.positions[first + t];
        acc += static_cast<double>(taps[t]) *
               bilinear_sample(feature, static_cast<float>(p.x), static_cast<float>(p.y));
      }
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

OffsetField predict_offsets(const Tensor& feature, const OffsetPredictor& predictor) {
  require_rank(feature, 2, "predict_offsets");
  if (predictor.weights.shape() != Shape{2, 8, 3, 3} || predictor.bias.shape() != Shape{2, 8})
    throw ShapeError("predict_offsets: predictor must be (2,8,3,3) weights and (2,8) bias");
  if (!(predictor.max_step > 0.0F && predictor.max_step <= 1.0F))
    throw std::invalid_argument("predict_offsets: max_step must lie in (0, 1]");
  const std::size_t h = feature.dim(0);
  const std::size_t w = feature.dim(1);
  OffsetField field = OffsetField::zeros(h, w);
  for (std::size_t path = 0; path < 2; ++path) {
    Tensor& cum = path == 0 ? field.dy_x_path : field.dx_y_path;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double minus = 0.0;
        double plus = 0.0;
        // Steps 0..3 walk c = -1..-4, steps 4..7 walk c = +1..+4.
        for (std::size_t c = 1; c <= 4; ++c) {
          minus += predictor.max_step * std::tanh(conv3x3(feature, predictor, path, c - 1, i, j));
          plus += predictor.max_step * std::tanh(conv3x3(feature, predictor, path, 3 + c, i, j));
          cum.at(i, j, kPathCenter - c) = static_cast<float>(minus);
          cum.at(i, j, kPathCenter + c) = static_cast<float>(plus);
        }
      }
    }
  }
  field.clamp_displacement();
  return field;
}

SamplePath snake_path_x(std::size_t col, std::size_t row, const OffsetField& offsets, bool unit_shift) {
  return make_path(col, row, offsets, Axis::X, unit_shift);
}

SamplePath snake_path_y(std::size_t col, std::size_t row, const OffsetField& offsets, bool unit_shift) {
  return make_path(col, row, offsets, Axis::Y, unit_shift);
}

Tensor snake_conv(const Tensor& feature, const StripKernel& kernel, const OffsetField& offsets, Axis axis,
                  bool unit_shift) {
  if (kernel.orientation != axis) throw std::invalid_argument("snake_conv: kernel orientation does not match axis");
  return sample_paths(feature, kernel.taps, offsets, axis, unit_shift);
}

Tensor snake_conv9(const Tensor& feature, const std::array<float, 9>& taps, const OffsetField& offsets, Axis axis,
                   bool unit_shift) {
  return sample_paths(feature, taps, offsets, axis, unit_shift);
}

Tensor linear_conv(const Tensor& feature, const StripKernel& kernel, Axis axis) {
  require_rank(feature, 2, "linear_conv");
  if (kernel.orientation != axis) throw std::invalid_argument("linear_conv: kernel orientation does not match axis");
  const std::size_t h = feature.dim(0);
  const std::size_t w = feature.dim(1);
  Tensor out({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -1; t <= 1; ++t) {
        const float v = axis == Axis::X ? feature.at(i, clamp_index(static_cast<std::ptrdiff_t>(j) + t, w))
                                        : feature.at(clamp_index(static_cast<std::ptrdiff_t>(i) + t, h), j);
        acc += static_cast<double>(kernel.taps[t + 1]) * v;
      }
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

float continuity_penalty(const OffsetField& offsets) {
  double total = 0.0;
  for (const Tensor* cum : {&offsets.dy_x_path, &offsets.dx_y_path}) {
    require_rank(*cum, 3, "continuity_penalty");
    const std::size_t cells = cum->dim(0) * cum->dim(1);
    const std::size_t len = cum->dim(2);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const float* p = &cum->data()[cell * len];
      for (std::size_t k = 0; k + 2 < len; ++k) {
        const double second = (static_cast<double>(p[k + 2]) - p[k + 1]) - (static_cast<double>(p[k + 1]) - p[k]);
        total += second * second;
      }
    }
  }
  return static_cast<float>(total);
}

Tensor fuse_paths(const Tensor& snake_out, const Tensor& linear_out, float w) {
  require_same_shape(snake_out, linear_out, "fuse_paths");
  if (!(w >= 0.0F && w <= 1.0F)) throw std::invalid_argument("fuse_paths: weight must lie in [0, 1]");
  Tensor out(snake_out.shape());
  const double ws = w;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(ws * snake_out[i] + (1.0 - ws) * linear_out[i]);
  return out;
}

LsConvResult lsconv(const Tensor& feature, const LsConvParams& params, Axis axis) {
  LsConvResult res;
  res.offsets = predict_offsets(feature, params.predictor);
  StripKernel kernel = params.kernel;
  kernel.orientation = axis;
  const Tensor snake = params.nine_taps ? snake_conv9(feature, params.taps9, res.offsets, axis, params.unit_shift)
                                        : snake_conv(feature, kernel, res.offsets, axis, params.unit_shift);
  res.output = fuse_paths(snake, linear_conv(feature, kernel, axis), params.fusion);
  res.penalty = continuity_penalty(res.offsets);
  require_finite(res.output, "lsconv");
  return res;
}

std::pair<Tensor, float> lsconv_channels(const Tensor& activations, const LsConvParams& params, bool both_axes,
                                         Axis axis) {
  require_rank(activations, 3, "lsconv_channels");
  const std::size_t k = activations.dim(0);
  const std::size_t plane = activations.dim(1) * activations.dim(2);
  Tensor out(activations.shape());
  double penalty = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const Tensor feature({activations.dim(1), activations.dim(2)},
                         std::vector<float>(activations.data().begin() + c * plane,
                                            activations.data().begin() + (c + 1) * plane));
    Tensor result;
    if (both_axes) {
      const auto rx = lsconv(feature, params, Axis::X);
      const auto ry = lsconv(feature, params, Axis::Y);
      result = fuse_paths(rx.output, ry.output, 0.5F);
      penalty += static_cast<double>(rx.penalty) + ry.penalty;
    } else {
      const auto r = lsconv(feature, params, axis);
      result = r.output;
      penalty += r.penalty;
    }
    std::copy(result.data().begin(), result.data().end(), out.data().begin() + c * plane);
  }
  return {out, static_cast<float>(penalty)};
}

}  // namespace hmpe
