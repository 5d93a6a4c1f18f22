#include <cmath>

#include "doctest.h"
#include "hmpe/rng.hpp"
#include "hmpe/viz.hpp"

using namespace hmpe;

TEST_CASE("colormap knots and clamping") {
  CHECK(colormap(0.0F) == Rgb{0, 0, 255});
  CHECK(colormap(0.25F) == Rgb{0, 255, 255});
  CHECK(colormap(0.5F) == Rgb{0, 255, 0});
  CHECK(colormap(0.75F) == Rgb{255, 255, 0});
  CHECK(colormap(1.0F) == Rgb{255, 0, 0});
  CHECK(colormap(-3.0F) == colormap(0.0F));
  CHECK(colormap(7.0F) == colormap(1.0F));
  CHECK(colormap(0.125F) == Rgb{0, 128, 255});  // 127.5 rounds up
}

TEST_CASE("ramp position is monotone in the input") {
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const float v = static_cast<float>(i) / 1000.0F;
    const double pos = ramp_position(colormap(v));
    REQUIRE(pos >= prev);
    REQUIRE(std::abs(pos - 4.0 * v) <= 4.0 / 255.0);
    prev = pos;
  }
  CHECK_THROWS(ramp_position(Rgb{10, 10, 10}));
}

TEST_CASE("render geometry and heatbar") {
  Rng rng(1);
  const Tensor heat = rng.uniform_tensor({3, 4}, 0, 1);
  const auto r = render_heatmap(heat, 5, Upscale::Nearest);
  CHECK(r.image.width == 20 + kHeatbarWidth);
  CHECK(r.image.height == 15);
  CHECK(r.clamped_values == 0);
  CHECK(r.image.pixel(20, 0) == Rgb{255, 0, 0});
  CHECK(r.image.pixel(20 + kHeatbarWidth - 1, 14) == Rgb{0, 0, 255});
  for (std::size_t y = 0; y < 15; ++y)
    for (std::size_t x = 0; x < 20; ++x) REQUIRE(r.image.pixel(x, y) == colormap(heat.at(y / 5, x / 5)));
  double prev = 5.0;
  for (std::size_t y = 0; y < 15; ++y) {
    const double pos = ramp_position(r.image.pixel(25, y));
    REQUIRE(pos <= prev);
    prev = pos;
  }
  const auto b = render_heatmap(heat, 3, Upscale::Bilinear);
  CHECK(b.image.width == 12 + kHeatbarWidth);
  const Tensor wild({1, 3}, std::vector<float>{-0.5F, 0.5F, 1.5F});
  CHECK(render_heatmap(wild, 1).clamped_values == 2);
  CHECK_THROWS(render_heatmap(heat, 0));
}

TEST_CASE("overlay blend") {
  RasterImage a(2, 1), b(2, 1);
  a.set_pixel(0, 0, {0, 100, 255});
  b.set_pixel(0, 0, {255, 0, 0});
  const auto o = overlay(a, b, 0.5F);
  CHECK(o.pixel(0, 0) == Rgb{128, 50, 128});
  CHECK(overlay(a, b, 0.0F) == a);
  CHECK(overlay(a, b, 1.0F) == b);
  CHECK_THROWS(overlay(a, RasterImage(3, 1), 0.5F));
  CHECK_THROWS(overlay(a, b, 1.5F));
}

TEST_CASE("ppm round trip") {
  Rng rng(2);
  const auto img = image_from_tensor(rng.uniform_tensor({3, 4, 5}, 0, 1));
  CHECK(img.width == 5);
  const auto bytes = encode_ppm(img);
  const std::string head(bytes.begin(), bytes.begin() + 11);
  CHECK(head == "P6\n5 4\n255\n");
  CHECK(decode_ppm(bytes) == img);
  std::vector<std::uint8_t> trunc(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS(decode_ppm(trunc));
  const std::string p3 = "P3\n1 1\n255\n0 0 0";
  CHECK_THROWS(decode_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())));
  CHECK_THROWS_AS(image_from_tensor(Tensor({2, 2, 2})), ShapeError);
}
