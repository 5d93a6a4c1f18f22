#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hmpe/tensor.hpp"

namespace hmpe {

using Rgb = std::array<std::uint8_t, 3>;

struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // RGB triples, row-major, size 3 * width * height

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(3 * w * h, 0) {}

  Rgb pixel(std::size_t x, std::size_t y) const;
  void set_pixel(std::size_t x, std::size_t y, const Rgb& c);
  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

enum class Upscale { Nearest, Bilinear };

inline constexpr std::size_t kHeatbarWidth = 16;

/// Piecewise-linear blue -> cyan -> green -> yellow -> red ramp with knots at
/// 0, 0.25, 0.5, 0.75, 1. Input is clamped to [0, 1]; channels round half up.
Rgb colormap(float v);

/// Position along the ramp in [0, 4] (segment index + fraction) recovered from
/// a colour produced by colormap.
double ramp_position(const Rgb& c);

struct RenderResult {
  RasterImage image;
  std::size_t clamped_values = 0;  // inputs outside [0, 1] that were clamped
};

/// Upscales a normalized heatmap, colormaps each pixel and appends a
/// kHeatbarWidth-wide vertical heatbar (red at the top row, blue at the
/// bottom) on the right edge.
RenderResult render_heatmap(const Tensor& heat, std::size_t scale, Upscale mode = Upscale::Bilinear);

/// Per-channel round(alpha * heat + (1 - alpha) * base).
RasterImage overlay(const RasterImage& base, const RasterImage& heat, float alpha);

/// Converts a (3, H, W) tensor with values in [0, 1] to an image.
RasterImage image_from_tensor(const Tensor& chw);

/// P6 binary PPM, maxval 255.
std::vector<std::uint8_t> encode_ppm(const RasterImage& img);
RasterImage decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::filesystem::path& path, const RasterImage& img);
RasterImage read_ppm(const std::filesystem::path& path);

}  // namespace hmpe
