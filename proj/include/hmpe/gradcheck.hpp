#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmpe/heads.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

/// One random toy-head problem; both heads share the activations.
struct GradcheckInstance {
  std::uint64_t seed = 0;
  std::size_t trial = 0;
  Tensor activations;
  ClassHead class_head;
  BboxHead bbox_head;
  BoxTarget target;
};

struct GradcheckRow {
  std::string head;  // "class" or "bbox"
  int order = 1;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;  // elements with |analytic| above the floor
  std::size_t worst_trial = 0;
  bool passed() const { return max_rel_err <= tolerance; }
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<GradcheckRow> rows;

  bool passed() const;
  std::string format() const;
};

inline constexpr double kGradcheckFloor = 1e-3;
double gradcheck_tolerance(int order);

/// Deterministic instance for (seed, trial). Bbox instances are redrawn until
/// every residual stays clear of the Huber knot under the stencil's widest
/// perturbation.
GradcheckInstance gradcheck_instance(std::uint64_t seed, std::size_t trial);

struct OrderError {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Max relative error of closed-form vs finite-difference partials.
OrderError check_class_order(const GradcheckInstance& inst, int order);
OrderError check_bbox_order(const GradcheckInstance& inst, int order);

/// Runs `trials` instances (trials >= 1) over both heads and orders 1..3.
GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials);

/// Writes the instance so it can be replayed: activations, both heads with
/// sidecars, and the target.
void dump_instance(const GradcheckInstance& inst, const std::filesystem::path& dir);

}  // namespace hmpe
