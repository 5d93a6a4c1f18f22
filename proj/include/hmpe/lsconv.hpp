#pragma once

#include <array>
#include <cstddef>

#include "hmpe/rng.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

enum class Axis { X, Y };

/// Number of positions on a snake path: c in {-4..4}, slot = c + 4.
inline constexpr std::size_t kPathLength = 9;
inline constexpr std::size_t kPathCenter = 4;
/// Maximum displacement from the center cell, in grid strides.
inline constexpr float kDisplacementBound = 9.0F;

/// Cumulative off-axis offsets for every cell and path slot. The center slot
/// is zero for predicted fields.
struct OffsetField {
  Tensor dy_x_path;  // (H, W, 9): y-offsets of the x-axis path
  Tensor dx_y_path;  // (H, W, 9): x-offsets of the y-axis path

  static OffsetField zeros(std::size_t height, std::size_t width);
  std::size_t height() const { return dy_x_path.dim(0); }
  std::size_t width() const { return dy_x_path.dim(1); }
  /// Clamps every cumulative offset into [-9, 9].
  void clamp_displacement();
};

struct StripKernel {
  std::array<float, 3> taps{0.25F, 0.5F, 0.25F};
  Axis orientation = Axis::X;  // X: 3x1 horizontal strip, Y: 1x3 vertical strip
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct SamplePath {
  std::array<Point2, kPathLength> positions;
};

/// 3x3 convolution predictor producing 8 per-step offsets (4 per side) for
/// each of the two paths.
struct OffsetPredictor {
  Tensor weights;  // (2, 8, 3, 3): path (0 = x-axis, 1 = y-axis), step, kernel
  Tensor bias;     // (2, 8)
  float max_step = 1.0F;

  static OffsetPredictor zeros();
  static OffsetPredictor random(Rng& rng, double weight_std);
};

/// Per-step offsets step = max_step * tanh(conv3x3(feature)) with replicate
/// padding, accumulated outward from the center slot.
OffsetField predict_offsets(const Tensor& feature, const OffsetPredictor& predictor);

/// Path positions of the horizontal snake around center (col x, row y):
///   c >= 0: (x + c + s, y + cum[c] + s),  c < 0: (x + c - s, y + cum[c] - s)
/// with s = 1 when unit_shift is set and 0 otherwise.
SamplePath snake_path_x(std::size_t col, std::size_t row, const OffsetField& offsets, bool unit_shift = true);
/// Vertical mirror: c >= 0: (x + cum[c] + s, y + c + s), c < 0: (x + cum[c] - s, y + c - s).
SamplePath snake_path_y(std::size_t col, std::size_t row, const OffsetField& offsets, bool unit_shift = true);

/// Samples the three centermost path positions (c = -1, 0, 1) bilinearly and
/// dots them with the kernel taps.
Tensor snake_conv(const Tensor& feature, const StripKernel& kernel, const OffsetField& offsets, Axis axis,
                  bool unit_shift = true);
/// Variant that dots all nine path positions with a 9-weight kernel.
Tensor snake_conv9(const Tensor& feature, const std::array<float, 9>& taps, const OffsetField& offsets, Axis axis,
                   bool unit_shift = true);

/// Axis-aligned 3-tap convolution with replicate border padding.
Tensor linear_conv(const Tensor& feature, const StripKernel& kernel, Axis axis);

/// Sum over all cells and both paths of squared second differences of the
/// cumulative offsets along the path.
float continuity_penalty(const OffsetField& offsets);

/// w * snake + (1 - w) * linear; w outside [0, 1] is rejected.
Tensor fuse_paths(const Tensor& snake_out, const Tensor& linear_out, float w);

struct LsConvParams {
  StripKernel kernel;
  OffsetPredictor predictor = OffsetPredictor::zeros();
  float fusion = 0.5F;
  bool unit_shift = true;
  bool nine_taps = false;
  std::array<float, 9> taps9{0.0F, 0.0F, 0.0F, 0.25F, 0.5F, 0.25F, 0.0F, 0.0F, 0.0F};
};

struct LsConvResult {
  Tensor output;
  OffsetField offsets;
  float penalty = 0.0F;
};

/// Full dual-path operator along one axis for an (H, W) feature map.
LsConvResult lsconv(const Tensor& feature, const LsConvParams& params, Axis axis);

/// Applies lsconv to every channel of a (K, H, W) tensor. With both_axes the
/// x and y results are averaged. Returns the summed continuity penalty too.
std::pair<Tensor, float> lsconv_channels(const Tensor& activations, const LsConvParams& params, bool both_axes,
                                         Axis axis = Axis::X);

}  // namespace hmpe
