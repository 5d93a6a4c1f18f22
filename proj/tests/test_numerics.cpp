#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hmpe/hmpt_io.hpp"
#include "hmpe/kv.hpp"
#include "hmpe/numerics.hpp"
#include "hmpe/rng.hpp"
#include "oracles.hpp"

using namespace hmpe;

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3}, 1.5F);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5F);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(require_rank(t, 3, "t"), ShapeError);
  Tensor bad({1}, std::nanf(""));
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(require_finite(bad, "bad"), NonFiniteError);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.next_u64();
    REQUIRE(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    REQUIRE(u.below(5) < 5);
  }
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("relu examples and idempotence") {
  const Tensor x({3}, std::vector<float>{-0.5F, 2.3F, 0.0F});
  const Tensor r = relu(x);
  CHECK(r[0] == 0.0F);
  CHECK(r[1] == 2.3F);
  CHECK(r[2] == 0.0F);
  Rng rng(1);
  const Tensor y = rng.normal_tensor({50}, 3.0);
  CHECK(relu(relu(y)) == relu(y));
}

TEST_CASE("softmax_rows examples") {
  const Tensor x({3, 3}, std::vector<float>{0, 0, 0, 1000, 1000, -1e30F, 0, std::log(3.0F), -1e30F});
  const Tensor s = softmax_rows(x);
  for (int c = 0; c < 3; ++c) CHECK(s.at(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  CHECK(s.at(1, 0) == doctest::Approx(0.5));
  CHECK(s.at(1, 1) == doctest::Approx(0.5));
  CHECK(s.at(2, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(s.at(2, 1) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK_THROWS_AS(softmax_rows(Tensor({3})), ShapeError);
}

TEST_CASE("softmax rows sum to one on extreme magnitudes") {
  Rng rng(9);
  Tensor x({1000, 7});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(-1e4, 1e4));
  const Tensor s = softmax_rows(x);
  for (std::size_t r = 0; r < 1000; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      REQUIRE(s.at(r, c) >= 0.0F);
      sum += s.at(r, c);
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("bilinear_sample examples") {
  Rng rng(3);
  const Tensor m = rng.uniform_tensor({4, 5}, -2.0, 2.0);
  CHECK(bilinear_sample(m, 2.0F, 3.0F) == m.at(3, 2));
  const Tensor line({1, 2}, std::vector<float>{4.0F, 6.0F});
  CHECK(bilinear_sample(line, 0.5F, 0.0F) == 5.0F);
  const Tensor sq = rng.uniform_tensor({4, 4}, -1.0, 1.0);
  CHECK(bilinear_sample(sq, 0.25F, 0.75F) == doctest::Approx(oracle::tent_sample(sq, 0.25, 0.75)).epsilon(1e-6));
  // Out of range clamps to the border.
  CHECK(bilinear_sample(m, -3.0F, -1.0F) == m.at(0, 0));
  CHECK(bilinear_sample(m, 40.0F, 40.0F) == m.at(3, 4));
}

TEST_CASE("bilinear_sample: lattice exactness, oracle agreement and Lipschitz bound") {
  Rng rng(4);
  const Tensor m = rng.uniform_tensor({6, 7}, -3.0, 3.0);
  double max_abs = 0.0;
  for (float v : m.data()) max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 7; ++j) REQUIRE(bilinear_sample(m, static_cast<float>(j), static_cast<float>(i)) == m.at(i, j));
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform(-1.0, 7.0), y = rng.uniform(-1.0, 6.0), eps = rng.uniform(0.0, 0.01);
    const double a = bilinear_sample(m, static_cast<float>(x), static_cast<float>(y));
    REQUIRE(std::abs(a - oracle::tent_sample(m, static_cast<float>(x), static_cast<float>(y))) <= 1e-5);
    const double b = bilinear_sample(m, static_cast<float>(x + eps), static_cast<float>(y));
    REQUIRE(std::abs(b - a) <= eps * 2.0 * max_abs + 1e-5);
  }
}

TEST_CASE("upsample_bilinear examples and bounds") {
  const Tensor c({3, 3}, 0.7F);
  for (std::size_t f : {1u, 2u, 5u}) {
    const Tensor u = upsample_bilinear(c, f);
    CHECK(u.dim(0) == 3 * f);
    for (float v : u.data()) REQUIRE(v == doctest::Approx(0.7F));
  }
  Rng rng(5);
  const Tensor m = rng.uniform_tensor({4, 3}, -1.0, 2.0);
  CHECK(upsample_bilinear(m, 1) == m);
  const Tensor ramp({2, 2}, std::vector<float>{0, 1, 0, 1});
  const Tensor r = upsample_bilinear(ramp, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j + 1 < 4; ++j) CHECK(r.at(i, j) <= r.at(i, j + 1));
  const Tensor u = upsample_bilinear(m, 3);
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  for (float v : u.data()) {
    REQUIRE(v >= *lo);
    REQUIRE(v <= *hi);
  }
  CHECK_THROWS(upsample_bilinear(m, 0));
}

TEST_CASE("nearest upsample and average pool") {
  const Tensor m({2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor n = upsample_nearest(m, 2);
  CHECK(n.at(0, 1) == 1.0F);
  CHECK(n.at(3, 3) == 4.0F);
  CHECK(average_pool(n, 2) == m);
  CHECK(average_pool(m, 2).at(0, 0) == 2.5F);
  CHECK_THROWS_AS(average_pool(Tensor({3, 3}), 2), ShapeError);
}

TEST_CASE("linear_map examples") {
  Rng rng(6);
  const Tensor x = rng.normal_tensor({3, 4}, 1.0);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0F;
  CHECK(linear_map(eye, Tensor({4}), x) == x);
  const Tensor zero_out = linear_map(Tensor({5, 4}), std::nullopt, x);
  for (float v : zero_out.data()) CHECK(v == 0.0F);
  const Tensor w = rng.normal_tensor({2, 3}, 1.0);
  const Tensor b = rng.normal_tensor({2}, 1.0);
  const Tensor x1 = rng.normal_tensor({1, 3}, 1.0);
  const auto expect = oracle::matmul_t(x1, w, {b[0], b[1]});
  const Tensor got = linear_map(w, b, x1);
  CHECK(got.at(0, 0) == doctest::Approx(expect[0]).epsilon(1e-6));
  CHECK(got.at(0, 1) == doctest::Approx(expect[1]).epsilon(1e-6));
  MacCounter counter;
  linear_map(w, std::nullopt, rng.normal_tensor({7, 3}, 1.0), &counter);
  CHECK(counter.macs == 7 * 2 * 3);
  CHECK_THROWS_AS(linear_map(w, std::nullopt, x), ShapeError);
  CHECK_THROWS_AS(linear_map(w, Tensor({3}), x1), ShapeError);
}

TEST_CASE("finite_diff_grad examples") {
  const ScalarFn sq = [](std::span<const double> x) { return x[0] * x[0]; };
  const ScalarFn cube = [](std::span<const double> x) { return x[0] * x[0] * x[0]; };
  const ScalarFn th = [](std::span<const double> x) { return std::tanh(x[0]); };
  CHECK(finite_diff_grad(sq, Tensor({1}, 3.0F), 1)[0] == doctest::Approx(6.0).epsilon(1e-4));
  CHECK(finite_diff_grad(cube, Tensor({1}, 2.0F), 2)[0] == doctest::Approx(12.0).epsilon(1e-2));
  CHECK(std::abs(finite_diff_grad(th, Tensor({1}, 0.0F), 3)[0] + 2.0) <= 1e-1);
  CHECK_THROWS(finite_diff_grad(sq, Tensor({1}), 4));
  CHECK_THROWS(finite_diff_grad(sq, Tensor({1}), 1, 0.0));
}

TEST_CASE("finite_diff_grad on cubic polynomials") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2), c = rng.uniform(-2, 2), d = rng.uniform(-2, 2);
    const ScalarFn f = [=](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += ((a * v + b) * v + c) * v + d;
      return s;
    };
    const Tensor x = rng.uniform_tensor({3}, -1.5, 1.5);
    const Tensor g1 = finite_diff_grad(f, x, 1);
    const Tensor g2 = finite_diff_grad(f, x, 2);
    const Tensor g3 = finite_diff_grad(f, x, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = x[i];
      const double d1 = (3 * a * v + 2 * b) * v + c, d2 = 6 * a * v + 2 * b, d3 = 6 * a;
      if (std::abs(d1) > 1e-3) REQUIRE(std::abs(g1[i] - d1) / std::abs(d1) <= 1e-6);
      if (std::abs(d2) > 1e-3) REQUIRE(std::abs(g2[i] - d2) / std::abs(d2) <= 1e-4);
      if (std::abs(d3) > 1e-3) REQUIRE(std::abs(g3[i] - d3) / std::abs(d3) <= 1e-2);
    }
  }
}

TEST_CASE("hmpt round trip and malformed input") {
  Rng rng(10);
  const Tensor t = rng.normal_tensor({2, 3, 4}, 1.0);
  const auto bytes = encode_hmpt(t);
  CHECK(bytes.size() == 4 + 1 + 3 * 4 + 24 * 4);
  CHECK(bytes[0] == 'H');
  CHECK(bytes[4] == 3);
  CHECK(bytes[5] == 2);
  CHECK(decode_hmpt(bytes) == t);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_hmpt(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_hmpt(truncated), FormatError);
  const auto path = std::filesystem::temp_directory_path() / "hmpe_numerics_roundtrip.hmpt";
  write_hmpt(path, t);
  CHECK(read_hmpt(path) == t);
  std::filesystem::remove(path);
}

TEST_CASE("key=value parsing") {
  const auto kv = parse_key_values("# comment\n a = 1 \n\nb=x,y\na=2\n");
  CHECK(kv.at("a") == "2");
  CHECK(kv.at("b") == "x,y");
  CHECK_THROWS(parse_key_values("novalue\n"));
  CHECK(parse_number("0.25", "k") == 0.25);
  CHECK_THROWS(parse_number("abc", "k"));
  CHECK_THROWS(parse_number("inf", "k"));
  CHECK(parse_number_list("1, 2.5,3").size() == 3);
  for (float v : {0.1F, 1.0F / 3.0F, -2.5e-7F, 12345.678F})
    CHECK(static_cast<float>(parse_number(format_float(v), "v")) == v);
}
