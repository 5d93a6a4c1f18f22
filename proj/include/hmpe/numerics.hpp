#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "hmpe/tensor.hpp"

namespace hmpe {

/// Counts multiply-accumulate operations executed by instrumented kernels.
struct MacCounter {
  std::uint64_t macs = 0;
  void add(std::uint64_t n) noexcept { macs += n; }
};

Tensor relu(const Tensor& x);

/// Row-wise softmax of a rank-2 tensor, stabilized by subtracting the row max.
Tensor softmax_rows(const Tensor& x);

/// Bilinear interpolation of a rank-2 (H, W) map at column x, row y.
/// Coordinates outside the grid are clamped to the border (replicate padding).
float bilinear_sample(const Tensor& map, float x, float y);

/// Bilinear sample of every channel of an (H, W, C) tensor restricted to
/// channels [c_begin, c_end). Results are accumulated into out[c - c_begin]
/// scaled by `weight`. Each channel costs 4 MACs for the corners plus one
/// for the weighted accumulation; the counter (when given) is charged 5 per
/// channel.
void bilinear_accumulate(const Tensor& map_hwc, double x, double y, std::size_t c_begin,
                         std::size_t c_end, double weight, std::span<double> out,
                         MacCounter* counter = nullptr);

/// Upsamples an (H, W) map by an integer factor using half-pixel-centered
/// bilinear interpolation. Output values stay within the input range.
Tensor upsample_bilinear(const Tensor& map, std::size_t factor);

/// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& map, std::size_t factor);

/// Non-overlapping mean pooling of an (H, W) map; factor must divide H and W.
Tensor average_pool(const Tensor& map, std::size_t factor);

/// out = x * W^T + b, with x (N, I), W (O, I), b (O). Accumulates in f64.
Tensor linear_map(const Tensor& weight, const std::optional<Tensor>& bias, const Tensor& x,
                  MacCounter* counter = nullptr);

/// Scalar function evaluated in f64 over the flattened elements of a tensor.
using ScalarFn = std::function<double(std::span<const double>)>;

/// Default central-difference step for derivative order 1, 2 or 3.
double default_fd_step(int order);

/// Element-wise central-difference estimate of the same-element partial
/// d^order f / dx_i^order. Each element is perturbed on its own; cross
/// partials are never formed. Perturbations and evaluation run in f64.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, int order, double h);
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, int order);

}  // namespace hmpe
