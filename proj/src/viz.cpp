#include "hmpe/viz.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hmpe/hmpt_io.hpp"
#include "hmpe/numerics.hpp"

namespace hmpe {

namespace {

constexpr std::array<Rgb, 5> kKnots{{{0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}};

std::uint8_t round_half_up(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace

Rgb RasterImage::pixel(std::size_t x, std::size_t y) const {
  const std::size_t o = 3 * (y * width + x);
  return {pixels[o], pixels[o + 1], pixels[o + 2]};
}

void RasterImage::set_pixel(std::size_t x, std::size_t y, const Rgb& c) {
  const std::size_t o = 3 * (y * width + x);
  pixels[o] = c[0];
  pixels[o + 1] = c[1];
  pixels[o + 2] = c[2];
}

Rgb colormap(float v) {
  const double t = 4.0 * std::clamp(static_cast<double>(v), 0.0, 1.0);
  const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
  const double f = t - static_cast<double>(seg);
  Rgb out{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double a = kKnots[seg][ch];
    const double b = kKnots[seg + 1][ch];
    out[ch] = round_half_up(a + (b - a) * f);
  }
  return out;
}

double ramp_position(const Rgb& c) {
  const double r = c[0], g = c[1], b = c[2];
  if (c[0] == 0 && c[2] == 255) return g / 255.0;
  if (c[0] == 0 && c[1] == 255) return 1.0 + (255.0 - b) / 255.0;
  if (c[2] == 0 && c[1] == 255) return 2.0 + r / 255.0;
  if (c[0] == 255 && c[2] == 0) return 3.0 + (255.0 - g) / 255.0;
  throw std::invalid_argument("ramp_position: colour is not on the ramp");
}

RenderResult render_heatmap(const Tensor& heat, std::size_t scale, Upscale mode) {
  require_rank(heat, 2, "render_heatmap");
  if (scale == 0) throw std::invalid_argument("render_heatmap: scale must be >= 1");
  RenderResult res;
  Tensor clamped = heat;
  for (auto& v : clamped.data()) {
    if (v < 0.0F || v > 1.0F) {
      ++res.clamped_values;
      v = std::clamp(v, 0.0F, 1.0F);
    }
  }
  const Tensor body = mode == Upscale::Bilinear ? upsample_bilinear(clamped, scale) : upsample_nearest(clamped, scale);
  const std::size_t bw = body.dim(1);
  const std::size_t bh = body.dim(0);
  res.image = RasterImage(bw + kHeatbarWidth, bh);
  for (std::size_t y = 0; y < bh; ++y) {
    for (std::size_t x = 0; x < bw; ++x) res.image.set_pixel(x, y, colormap(body.at(y, x)));
    const double v = bh > 1 ? 1.0 - static_cast<double>(y) / static_cast<double>(bh - 1) : 1.0;
    const Rgb bar = colormap(static_cast<float>(v));
    for (std::size_t x = bw; x < bw + kHeatbarWidth; ++x) res.image.set_pixel(x, y, bar);
  }
  return res;
}

RasterImage overlay(const RasterImage& base, const RasterImage& heat, float alpha) {
  if (base.width != heat.width || base.height != heat.height) {
    throw std::invalid_argument("overlay: image sizes differ (" + std::to_string(base.width) + "x" +
                                std::to_string(base.height) + " vs " + std::to_string(heat.width) + "x" +
                                std::to_string(heat.height) + ")");
  }
  if (!(alpha >= 0.0F && alpha <= 1.0F)) throw std::invalid_argument("overlay: alpha must lie in [0, 1]");
  RasterImage out(base.width, base.height);
  const double a = alpha;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = round_half_up(a * heat.pixels[i] + (1.0 - a) * base.pixels[i]);
  return out;
}

RasterImage image_from_tensor(const Tensor& chw) {
  require_rank(chw, 3, "image_from_tensor");
  if (chw.dim(0) != 3) throw ShapeError("image_from_tensor: expected 3 channels, got " + shape_to_string(chw.shape()));
  RasterImage img(chw.dim(2), chw.dim(1));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      img.set_pixel(x, y,
                    {round_half_up(255.0 * std::clamp(chw.at(0, y, x), 0.0F, 1.0F)),
                     round_half_up(255.0 * std::clamp(chw.at(1, y, x), 0.0F, 1.0F)),
                     round_half_up(255.0 * std::clamp(chw.at(2, y, x), 0.0F, 1.0F))});
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

RasterImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&] {
    skip_space_and_comments();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw std::invalid_argument("PPM: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw std::invalid_argument("PPM: not a P6 file");
  pos = 2;
  const std::size_t w = read_number();
  const std::size_t h = read_number();
  const std::size_t maxval = read_number();
  if (maxval != 255) throw std::invalid_argument("PPM: only maxval 255 is supported");
  ++pos;  // single whitespace before raster
  if (bytes.size() - pos != 3 * w * h) throw std::invalid_argument("PPM: raster size mismatch");
  RasterImage img(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.pixels.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const RasterImage& img) { write_file_bytes(path, encode_ppm(img)); }

RasterImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file_bytes(path)); }

}  // namespace hmpe
