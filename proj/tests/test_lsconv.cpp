#include <cmath>

#include "doctest.h"
#include "hmpe/lsconv.hpp"
#include "hmpe/rng.hpp"
#include "oracles.hpp"

using namespace hmpe;

namespace {

OffsetField random_field(Rng& rng, std::size_t h, std::size_t w, double spread) {
  OffsetField f = OffsetField::zeros(h, w);
  for (auto* t : {&f.dy_x_path, &f.dx_y_path})
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t k = 0; k < kPathLength; ++k)
          if (k != kPathCenter) t->at(i, j, k) = static_cast<float>(rng.uniform(-spread, spread));
  return f;
}

}  // namespace

TEST_CASE("snake path hand cases") {
  OffsetField f = OffsetField::zeros(9, 9);
  f.dy_x_path.at(4, 4, kPathCenter + 2) = 0.5F;
  const auto p = snake_path_x(4, 4, f);
  CHECK(p.positions[kPathCenter + 2] == Point2{7.0, 5.5});
  CHECK(p.positions[kPathCenter] == Point2{5.0, 5.0});

  f.dy_x_path.at(4, 4, kPathCenter - 3) = -1.25F;
  CHECK(snake_path_x(4, 4, f).positions[kPathCenter - 3] == Point2{0.0, 1.75});
  CHECK(snake_path_x(4, 4, f, false).positions[kPathCenter - 3] == Point2{1.0, 2.75});

  f.dx_y_path.at(2, 3, kPathCenter + 1) = 0.25F;
  CHECK(snake_path_y(3, 2, f).positions[kPathCenter + 1] == Point2{4.25, 4.0});
  CHECK(snake_path_y(3, 2, f, false).positions[kPathCenter + 1] == Point2{3.25, 3.0});
  CHECK_THROWS(snake_path_x(9, 0, f));
}

TEST_CASE("snake positions match the oracle") {
  Rng rng(1);
  const auto f = random_field(rng, 6, 5, 3.0);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (bool shift : {true, false}) {
        const auto px = snake_path_x(j, i, f, shift);
        const auto py = snake_path_y(j, i, f, shift);
        for (std::size_t k = 0; k < kPathLength; ++k) {
          const int c = static_cast<int>(k) - 4;
          const auto ox = oracle::snake_position(j, i, c, f.dy_x_path.at(i, j, k), true, shift);
          const auto oy = oracle::snake_position(j, i, c, f.dx_y_path.at(i, j, k), false, shift);
          REQUIRE(px.positions[k].x == ox.x);
          REQUIRE(px.positions[k].y == ox.y);
          REQUIRE(py.positions[k].x == oy.x);
          REQUIRE(py.positions[k].y == oy.y);
        }
      }
}

TEST_CASE("zero offsets align the path with the axis") {
  Rng rng(2);
  const auto f = OffsetField::zeros(5, 6);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const auto px = snake_path_x(j, i, f, false);
      const auto py = snake_path_y(j, i, f, false);
      for (std::size_t k = 0; k < kPathLength; ++k) {
        REQUIRE(px.positions[k].y == static_cast<double>(i));
        REQUIRE(px.positions[k].x == static_cast<double>(j) + static_cast<double>(k) - 4.0);
        REQUIRE(py.positions[k].x == static_cast<double>(j));
      }
    }
  const Tensor feat = rng.uniform_tensor({5, 6}, -1, 1);
  for (Axis ax : {Axis::X, Axis::Y}) {
    StripKernel k{{0.2F, 0.5F, 0.3F}, ax};
    CHECK(snake_conv(feat, k, f, ax, false) == linear_conv(feat, k, ax));
  }
}

TEST_CASE("displacement bound holds on 1e5 random cells") {
  Rng rng(3);
  OffsetPredictor pred = OffsetPredictor::random(rng, 3.0);
  std::size_t cells = 0;
  while (cells < 100000) {
    const Tensor feat = rng.uniform_tensor({16, 16}, -5, 5);
    pred.max_step = static_cast<float>(rng.uniform(0.1, 1.0));
    const auto f = predict_offsets(feat, pred);
    for (const Tensor* t : {&f.dy_x_path, &f.dx_y_path})
      for (float v : t->data()) REQUIRE(std::abs(v) <= kDisplacementBound);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) {
        REQUIRE(f.dy_x_path.at(i, j, kPathCenter) == 0.0F);
        const auto p = snake_path_x(j, i, f);
        for (std::size_t k = 0; k < kPathLength; ++k) {
          // Along-axis reach is |c| + 1 <= 5, off-axis is |cum| + 1.
          REQUIRE(std::abs(p.positions[k].x - j) <= kDisplacementBound);
          REQUIRE(std::abs(p.positions[k].y - i) <= kDisplacementBound + 1.0);
        }
      }
    cells += 256;
  }
  OffsetField big = OffsetField::zeros(1, 1);
  big.dy_x_path[0] = 30.0F;
  big.dx_y_path[1] = -12.0F;
  big.clamp_displacement();
  CHECK(big.dy_x_path[0] == 9.0F);
  CHECK(big.dx_y_path[1] == -9.0F);
}

TEST_CASE("predicted offsets accumulate bounded steps") {
  Rng rng(4);
  const OffsetPredictor pred = OffsetPredictor::random(rng, 0.5);
  const Tensor feat = rng.uniform_tensor({4, 4}, -1, 1);
  const auto f = predict_offsets(feat, pred);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 1; c <= 4; ++c) {
        const double plus = f.dy_x_path.at(i, j, kPathCenter + c) - f.dy_x_path.at(i, j, kPathCenter + c - 1);
        const double minus = f.dy_x_path.at(i, j, kPathCenter - c) - f.dy_x_path.at(i, j, kPathCenter - c + 1);
        REQUIRE(std::abs(plus) <= 1.0 + 1e-6);
        REQUIRE(std::abs(minus) <= 1.0 + 1e-6);
      }
  const auto zero = predict_offsets(feat, OffsetPredictor::zeros());
  CHECK(zero.dy_x_path == OffsetField::zeros(4, 4).dy_x_path);
}

TEST_CASE("continuity penalty") {
  auto f = OffsetField::zeros(3, 3);
  CHECK(continuity_penalty(f) == 0.0F);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < kPathLength; ++k) {
        const double c = static_cast<double>(k) - 4.0;
        f.dy_x_path.at(i, j, k) = static_cast<float>(0.25 * c);
        f.dx_y_path.at(i, j, k) = static_cast<float>(-0.5 * c);
      }
  CHECK(continuity_penalty(f) == 0.0F);
  auto g = OffsetField::zeros(1, 1);
  g.dy_x_path[5] = 1.0F;  // second differences 1, -2, 1
  CHECK(continuity_penalty(g) == 6.0F);
  Rng rng(5);
  CHECK(continuity_penalty(random_field(rng, 3, 3, 1.0)) > 0.0F);
}

TEST_CASE("linear, snake and fusion match the oracles") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 3 + rng.below(6), w = 3 + rng.below(6);
    const Tensor feat = rng.uniform_tensor({h, w}, -1, 1);
    const auto f = random_field(rng, h, w, 2.0);
    const bool shift = rng.below(2) == 1;
    for (Axis ax : {Axis::X, Axis::Y}) {
      const StripKernel k{{static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1)),
                           static_cast<float>(rng.uniform(-1, 1))},
                          ax};
      const auto lin = linear_conv(feat, k, ax);
      const auto ref = oracle::strip_conv(feat, k.taps.data(), ax == Axis::X);
      for (std::size_t n = 0; n < lin.size(); ++n) REQUIRE(std::abs(lin[n] - ref[n]) <= 1e-6);

      const auto sn = snake_conv(feat, k, f, ax, shift);
      const Tensor& cum = ax == Axis::X ? f.dy_x_path : f.dx_y_path;
      std::array<float, 9> taps9{};
      for (float& v : taps9) v = static_cast<float>(rng.uniform(-1, 1));
      const auto sn9 = snake_conv9(feat, taps9, f, ax, shift);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          double e3 = 0.0, e9 = 0.0;
          for (std::size_t slot = 0; slot < kPathLength; ++slot) {
            const int c = static_cast<int>(slot) - 4;
            const auto p = oracle::snake_position(j, i, c, cum.at(i, j, slot), ax == Axis::X, shift);
            const double v = oracle::tent_sample(feat, p.x, p.y);
            if (slot >= 3 && slot <= 5) e3 += k.taps[slot - 3] * v;
            e9 += taps9[slot] * v;
          }
          REQUIRE(std::abs(sn.at(i, j) - e3) <= 1e-6 * std::max(1.0, std::abs(e3)));
          REQUIRE(std::abs(sn9.at(i, j) - e9) <= 2e-6 * std::max(1.0, std::abs(e9)));
        }

      const float wf = static_cast<float>(rng.uniform());
      const auto fused = fuse_paths(sn, lin, wf);
      for (std::size_t n = 0; n < fused.size(); ++n) {
        const double e = static_cast<double>(wf) * sn[n] + (1.0 - wf) * lin[n];
        REQUIRE(std::abs(fused[n] - e) <= 1e-6);
      }
    }
  }
  const Tensor a({2, 2}, 1.0F);
  CHECK_THROWS(fuse_paths(a, a, 1.5F));
  CHECK_THROWS(linear_conv(a, StripKernel{{0, 1, 0}, Axis::Y}, Axis::X));
}

TEST_CASE("lsconv end to end") {
  Rng rng(7);
  const Tensor act = rng.uniform_tensor({3, 6, 6}, 0, 1);
  LsConvParams params;
  params.predictor = OffsetPredictor::random(rng, 0.1);
  const auto [out, pen] = lsconv_channels(act, params, true);
  CHECK(out.shape() == act.shape());
  CHECK(pen >= 0.0F);
  const auto [out2, pen2] = lsconv_channels(act, params, true);
  CHECK(out == out2);
  CHECK(pen == pen2);

  // Fusion 0 keeps only the linear path.
  LsConvParams plain;
  plain.fusion = 0.0F;
  const Tensor feat = rng.uniform_tensor({5, 5}, 0, 1);
  const auto r = lsconv(feat, plain, Axis::Y);
  CHECK(r.output == linear_conv(feat, StripKernel{plain.kernel.taps, Axis::Y}, Axis::Y));
  CHECK(r.penalty == 0.0F);
}
