#include "hmpe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hmpe/hmpt_io.hpp"
#include "hmpe/kv.hpp"
#include "hmpe/numerics.hpp"
#include "hmpe/rng.hpp"

namespace hmpe {

namespace {

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

bool clear_of_knot(const BboxHead& head, const Tensor& a, const BoxTarget& target) {
  const std::size_t n = a.size();
  const auto t = target.as_array();
  // Widest stencil shift is 3h at order 3; sigmoid slope is at most 1/4.
  const double reach = 3.0 * default_fd_step(3);
  for (std::size_t c = 0; c < 4; ++c) {
    double u = head.bias[c];
    double wmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = head.weights[c * n + i];
      u += w * a[i];
      wmax = std::max(wmax, std::abs(w));
    }
    const double r = sigmoid(u) - t[c];
    if (std::abs(std::abs(r) - head.delta) <= 0.25 * wmax * reach + 1e-6) return false;
  }
  return true;
}

OrderError compare(const Tensor& analytic, const Tensor& numeric) {
  OrderError e;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    if (std::abs(a) <= kGradcheckFloor) continue;
    ++e.checked;
    e.max_rel_err = std::max(e.max_rel_err, std::abs(a - static_cast<double>(numeric[i])) / std::abs(a));
  }
  return e;
}

}  // namespace

double gradcheck_tolerance(int order) {
  switch (order) {
    case 1: return 1e-4;
    case 2: return 1e-3;
    case 3: return 5e-2;
    default: throw std::invalid_argument("gradcheck: order must be 1, 2 or 3");
  }
}

GradcheckInstance gradcheck_instance(std::uint64_t seed, std::size_t trial) {
  Rng rng(derive_seed(seed, "gradcheck-" + std::to_string(trial)));
  GradcheckInstance inst;
  inst.seed = seed;
  inst.trial = trial;
  const Shape shape{1 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3)};
  for (;;) {
    inst.activations = rng.uniform_tensor(shape, -1.0, 1.0);
    inst.class_head.weights = rng.uniform_tensor(shape, -0.6, 0.6);
    inst.class_head.bias = static_cast<float>(rng.uniform(-1.0, 1.0));
    const float delta = static_cast<float>(rng.uniform(0.05, 1.0));
    inst.bbox_head = BboxHead::random(shape, rng, 0.4, delta, 0.5);
    inst.target.cx = static_cast<float>(rng.uniform(0.1, 0.9));
    inst.target.cy = static_cast<float>(rng.uniform(0.1, 0.9));
    inst.target.w = static_cast<float>(rng.uniform(0.05, 0.9));
    inst.target.h = static_cast<float>(rng.uniform(0.05, 0.9));
    if (clear_of_knot(inst.bbox_head, inst.activations, inst.target)) return inst;
  }
}

OrderError check_class_order(const GradcheckInstance& inst, int order) {
  const ScalarFn f = [&](std::span<const double> a) { return class_score_f64(inst.class_head, a); };
  return compare(class_partials(inst.class_head, inst.activations, order),
                 finite_diff_grad(f, inst.activations, order));
}

OrderError check_bbox_order(const GradcheckInstance& inst, int order) {
  const ScalarFn f = [&](std::span<const double> a) { return reg_loss_f64(inst.bbox_head, a, inst.target); };
  return compare(reg_partials(inst.bbox_head, inst.activations, inst.target, order),
                 finite_diff_grad(f, inst.activations, order));
}

bool GradcheckReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.passed(); });
}

std::string GradcheckReport::format() const {
  std::ostringstream os;
  os << "seed=" << seed << " trials=" << trials << "\n";
  os << "head   order  max_rel_err   tolerance  checked  worst_trial  status\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6s %5d  %11.4e  %10.1e  %7zu  %11zu  %s\n", r.head.c_str(), r.order,
                  r.max_rel_err, r.tolerance, r.checked, r.worst_trial, r.passed() ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("gradcheck: trials must be >= 1");
  GradcheckReport report;
  report.seed = seed;
  report.trials = trials;
  for (const char* head : {"class", "bbox"})
    for (int order = 1; order <= 3; ++order) report.rows.push_back({head, order, 0.0, gradcheck_tolerance(order)});
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = gradcheck_instance(seed, t);
    for (auto& row : report.rows) {
      const auto e = row.head == "class" ? check_class_order(inst, row.order) : check_bbox_order(inst, row.order);
      row.checked += e.checked;
      if (e.max_rel_err > row.max_rel_err) {
        row.max_rel_err = e.max_rel_err;
        row.worst_trial = t;
      }
    }
  }
  return report;
}

void dump_instance(const GradcheckInstance& inst, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_hmpt(dir / "activations.hmpt", inst.activations);
  save_class_head(dir / "class_head.hmpt", inst.class_head);
  save_bbox_head(dir / "bbox_head.hmpt", inst.bbox_head);
  const auto& t = inst.target;
  write_text_file(dir / "instance.txt",
                  format_key_values({{"seed", std::to_string(inst.seed)},
                                     {"trial", std::to_string(inst.trial)},
                                     {"target", format_float(t.cx) + "," + format_float(t.cy) + "," +
                                                    format_float(t.w) + "," + format_float(t.h)}}));
}

}  // namespace hmpe
