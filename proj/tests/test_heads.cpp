#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "hmpe/gradcheck.hpp"
#include "hmpe/heads.hpp"
#include "hmpe/numerics.hpp"

using namespace hmpe;

namespace {

// Copies out the elements so temporaries can be iterated safely.
std::vector<float> values_of(const Tensor& t) { return t.values(); }

double dot64(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double sig(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

TEST_CASE("class_score examples") {
  const Shape s{2, 3, 3};
  Rng rng(1);
  const Tensor a = rng.normal_tensor(s, 1.0);
  CHECK(class_score(ClassHead{Tensor(s), 0.0F}, a) == 0.0F);
  CHECK(class_score(ClassHead{Tensor(s), 0.7F}, a) == doctest::Approx(std::tanh(0.7)));
  const ClassHead head = ClassHead::random(s, rng, 0.3, 0.2F);
  CHECK(class_score(head, a) == doctest::Approx(std::tanh(dot64(head.weights, a) + 0.2)).epsilon(1e-6));
  CHECK_THROWS_AS(class_score(head, Tensor({2, 3, 4})), ShapeError);
}

TEST_CASE("class_score bounded in (-1, 1)") {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const Tensor a = rng.normal_tensor({3, 2, 2}, 2.0);
    const ClassHead h = ClassHead::random({3, 2, 2}, rng, 0.5, static_cast<float>(rng.uniform(-2, 2)));
    const std::vector<double> a64(a.data().begin(), a.data().end());
    const double y64 = class_score_f64(h, a64);
    REQUIRE(y64 > -1.0);
    REQUIRE(y64 < 1.0);
    // f32 storage rounds tanh to exactly +-1 once |s| exceeds about 9.
    REQUIRE(std::abs(class_score(h, a)) <= 1.0F);
  }
}

TEST_CASE("class_partials at s = 0") {
  const Shape s{1, 2, 2};
  const Tensor a({1, 2, 2}, std::vector<float>{1, -1, 1, -1});
  const ClassHead head{Tensor(s, 0.5F), 0.0F};  // <w, a> = 0
  const Tensor g1 = class_partials(head, a, 1);
  const Tensor g2 = class_partials(head, a, 2);
  const Tensor g3 = class_partials(head, a, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g1[i] == doctest::Approx(0.5));
    CHECK(g2[i] == 0.0F);
    CHECK(g3[i] == doctest::Approx(-0.25));
  }
  CHECK_THROWS(class_partials(head, a, 0));
  CHECK_THROWS(class_partials(head, a, 4));
  const ScalarFn f = [&](std::span<const double> x) { return class_score_f64(head, x); };
  const Tensor fd = finite_diff_grad(f, a, 3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(fd[i] == doctest::Approx(-0.25).epsilon(5e-2));
}

TEST_CASE("huber examples and C1 knot") {
  CHECK(huber(0.5, 1.0) == 0.125);
  CHECK(huber_grad(0.5, 1.0) == 0.5);
  CHECK(huber(2.0, 1.0) == 1.5);
  CHECK(huber_grad(2.0, 1.0) == 1.0);
  CHECK(huber_grad(-2.0, 1.0) == -1.0);
  for (double d : {0.1, 0.5, 1.0, 3.0}) {
    const double e = 1e-9;
    CHECK(std::abs(huber(d - e, d) - huber(d + e, d)) <= 1e-7);
    CHECK(std::abs(huber_grad(d - e, d) - huber_grad(d + e, d)) <= 1e-7);
    CHECK(std::abs(huber(-d - e, d) - huber(-d + e, d)) <= 1e-7);
  }
}

TEST_CASE("reg_loss examples") {
  const Shape s{1, 2, 2};
  BboxHead head{Tensor({4, 1, 2, 2}), Tensor({4}), 1.0F};
  const Tensor a({1, 2, 2}, 0.3F);
  // Zero weights and bias predict 0.5 for every coordinate.
  CHECK(reg_loss(head, a, BoxTarget{0.5F, 0.5F, 0.5F, 0.5F}) == 0.0F);
  CHECK(reg_loss(head, a, BoxTarget{0.0F, 0.5F, 0.5F, 0.5F}) == doctest::Approx(0.125));
  Rng rng(3);
  const BboxHead rh = BboxHead::random(s, rng, 0.7, 0.3F);
  const BoxTarget t{0.2F, 0.7F, 0.3F, 0.9F};
  double expect = 0.0;
  const auto ta = t.as_array();
  for (std::size_t c = 0; c < 4; ++c) {
    double u = rh.bias[c];
    for (std::size_t i = 0; i < 4; ++i) u += static_cast<double>(rh.weights[c * 4 + i]) * a[i];
    const double r = sig(u) - ta[c];
    expect += std::abs(r) <= 0.3 ? 0.5 * r * r : 0.3 * (std::abs(r) - 0.15);
  }
  CHECK(reg_loss(rh, a, t) == doctest::Approx(expect).epsilon(1e-6));
  CHECK_THROWS_AS(reg_loss(rh, Tensor({2, 2, 2}), t), ShapeError);
}

TEST_CASE("reg_loss nonnegative, zero only at the target") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Tensor a = rng.uniform_tensor({2, 2, 2}, -1, 1);
    const BboxHead h = BboxHead::random({2, 2, 2}, rng, 0.5, 0.5F);
    const auto p = bbox_predict(h, a);
    REQUIRE(reg_loss(h, a, BoxTarget{p[0], p[1], p[2], p[3]}) == doctest::Approx(0.0).epsilon(1e-12));
    BoxTarget off{p[0], p[1], p[2], std::clamp(p[3] + 0.05F, 0.01F, 1.0F)};
    if (off.h == p[3]) off.h = p[3] - 0.05F;
    REQUIRE(reg_loss(h, a, off) > 0.0F);
  }
}

TEST_CASE("reg_partials examples") {
  const Shape s{1, 2, 2};
  BboxHead head{Tensor({4, 1, 2, 2}), Tensor({4}), 1.0F};
  const Tensor a({1, 2, 2}, 0.4F);
  for (int order = 1; order <= 3; ++order)
    for (float v : values_of(reg_partials(head, a, BoxTarget{0.5F, 0.5F, 0.5F, 0.5F}, order))) CHECK(v == 0.0F);
  CHECK_THROWS(reg_partials(head, a, BoxTarget{}, 5));
}

TEST_CASE("partials agree with finite differences on seeded instances") {
  for (std::size_t trial = 0; trial < 30; ++trial) {
    const auto inst = gradcheck_instance(99, trial);
    for (int order = 1; order <= 3; ++order) {
      const auto c = check_class_order(inst, order);
      const auto b = check_bbox_order(inst, order);
      REQUIRE(c.max_rel_err <= gradcheck_tolerance(order));
      REQUIRE(b.max_rel_err <= gradcheck_tolerance(order));
    }
    const auto b1 = check_bbox_order(inst, 1);
    REQUIRE(b1.max_rel_err <= 1e-3);
  }
}

TEST_CASE("gradcheck rejects zero trials and is deterministic") {
  CHECK_THROWS(gradcheck(1, 0));
  const auto a = gradcheck_instance(5, 3);
  const auto b = gradcheck_instance(5, 3);
  CHECK(a.activations == b.activations);
  CHECK(a.bbox_head.weights == b.bbox_head.weights);
  const auto r = gradcheck(5, 3);
  CHECK(r.passed());
  CHECK(r.rows.size() == 6);
}

TEST_CASE("head serialization round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hmpe_heads_io";
  fs::create_directories(dir);
  Rng rng(6);
  const ClassHead ch = ClassHead::random({2, 3, 3}, rng, 0.2, -0.75F);
  const BboxHead bh = BboxHead::random({2, 3, 3}, rng, 0.2, 0.4F);
  save_class_head(dir / "class.hmpt", ch);
  save_bbox_head(dir / "bbox.hmpt", bh);
  CHECK(fs::exists(dir / "class.txt"));
  const auto ch2 = load_class_head(dir / "class.hmpt");
  const auto bh2 = load_bbox_head(dir / "bbox.hmpt");
  CHECK(ch2.weights == ch.weights);
  CHECK(ch2.bias == ch.bias);
  CHECK(bh2.weights == bh.weights);
  CHECK(bh2.bias == bh.bias);
  CHECK(bh2.delta == bh.delta);
  fs::remove_all(dir);
}

TEST_CASE("box target parsing") {
  const auto t = parse_box_target("0.5,0.4,0.2,0.3");
  CHECK(t.cx == 0.5F);
  CHECK(t.h == 0.3F);
  CHECK_THROWS(parse_box_target("0.5,0.4,0.2"));
  CHECK_THROWS(parse_box_target("0.5,0.4,0,0.3"));
  CHECK_THROWS(parse_box_target("1.5,0.4,0.2,0.3"));
  CHECK(t.contains(0.5F, 0.4F));
  CHECK_FALSE(t.contains(0.7F, 0.4F));
}
