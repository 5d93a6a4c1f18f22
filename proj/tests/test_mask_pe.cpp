#include <cmath>

#include "doctest.h"
#include "hmpe/mask_pe.hpp"
#include "hmpe/rng.hpp"

using namespace hmpe;

TEST_CASE("mask examples") {
  const Tensor heat({2, 2}, std::vector<float>{0.0F, 0.3F, 0.35F, 0.9F});
  const auto m = mask_from_heatmap(heat, 0.35F);
  CHECK(m.mask == Tensor({2, 2}, std::vector<float>{0, 0, 0, 1}));
  const auto z = mask_from_heatmap(heat, 0.0F);
  CHECK(z.mask == Tensor({2, 2}, std::vector<float>{0, 1, 1, 1}));
  CHECK_THROWS(mask_from_heatmap(heat, 1.0F));
  CHECK_THROWS(mask_from_heatmap(heat, -0.1F));
  CHECK_THROWS_AS(mask_from_heatmap(Tensor({4}), 0.5F), ShapeError);
}

TEST_CASE("pe temperatures") {
  CHECK(pe_temperature(0, 4) == 1.0);
  CHECK(pe_temperature(1, 4) == 100.0);
  CHECK(pe_temperature(0, 64) == 1.0);
  CHECK(pe_temperature(16, 64) == doctest::Approx(100.0));
}

TEST_CASE("sinusoidal pe values") {
  const auto pe = sinusoidal_pe(3, 5, 4);
  CHECK(pe.pe.shape() == Shape{3, 5, 4});
  CHECK(pe.pe.at(0, 0, 0) == 1.0F);
  CHECK(pe.pe.at(0, 0, 1) == 1.0F);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double e0 = std::sin(static_cast<double>(i)) + std::cos(static_cast<double>(j));
      const double e1 = std::sin(i / 100.0) + std::cos(j / 100.0);
      CHECK(pe.pe.at(i, j, 0) == static_cast<float>(e0));
      CHECK(pe.pe.at(i, j, 1) == pe.pe.at(i, j, 0));
      CHECK(pe.pe.at(i, j, 2) == static_cast<float>(e1));
      CHECK(pe.pe.at(i, j, 3) == pe.pe.at(i, j, 2));
    }
  CHECK_THROWS(sinusoidal_pe(2, 2, 3));
  CHECK_THROWS(sinusoidal_pe(2, 2, 0));
}

TEST_CASE("masked pe gates cold cells and keeps hot cells bit-exact") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const Tensor heat = rng.uniform_tensor({6, 7}, 0.0, 1.0);
    const float tau = static_cast<float>(rng.uniform(0.0, 0.95));
    const auto pe = sinusoidal_pe(6, 7, 8);
    const auto gated = masked_pe(pe, mask_from_heatmap(heat, tau));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        for (std::size_t d = 0; d < 8; ++d) {
          if (heat.at(i, j) > tau) REQUIRE(gated.pe.at(i, j, d) == pe.pe.at(i, j, d));
          else REQUIRE(gated.pe.at(i, j, d) == 0.0F);
        }
  }
  const auto pe = sinusoidal_pe(3, 3, 4);
  CHECK_THROWS_AS(masked_pe(pe, mask_from_heatmap(Tensor({3, 4}), 0.5F)), ShapeError);
}

TEST_CASE("mask nesting over the tau grid") {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const Tensor heat = rng.uniform_tensor({5, 5}, 0.0, 1.0);
    Tensor prev = mask_from_heatmap(heat, 0.0F).mask;
    for (int k = 1; k <= 9; ++k) {
      const Tensor m = mask_from_heatmap(heat, static_cast<float>(k) / 10.0F).mask;
      for (std::size_t i = 0; i < m.size(); ++i) {
        REQUIRE((m[i] == 0.0F || m[i] == 1.0F));
        REQUIRE(m[i] <= prev[i]);
      }
      prev = m;
    }
  }
}

TEST_CASE("classify_regions partitions the grid") {
  const Tensor heat({2, 3}, std::vector<float>{0.9F, 0.1F, 0.5F, 0.5F, 0.0F, 0.7F});
  const auto parts = classify_regions(heat, 0.5F);
  CHECK(parts.hot == std::vector<GridCell>{{0, 0}, {1, 2}});
  CHECK(parts.cold.size() == 4);
  CHECK(parts.cold.front() == GridCell{0, 1});
}
