#pragma once

#include <cstddef>
#include <vector>

#include "hmpe/tensor.hpp"

namespace hmpe {

/// Binary spatial filter: 1 on hot cells (heat > tau), 0 on cold cells.
struct MaskFilter {
  Tensor mask;  // (H, W), every element exactly 0 or 1
  float tau = 0.0F;
};

/// Sinusoidal table of shape (H, W, D) with D even.
struct PosEncoding {
  Tensor pe;

  std::size_t height() const { return pe.dim(0); }
  std::size_t width() const { return pe.dim(1); }
  std::size_t depth() const { return pe.dim(2); }
};

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct RegionPartition {
  std::vector<GridCell> hot;
  std::vector<GridCell> cold;
};

/// mask(i,j) = 1 iff h(i,j) > tau. tau must lie in [0, 1); tau = 0 masks out
/// exactly the zero-heat cells.
MaskFilter mask_from_heatmap(const Tensor& heat, float tau);

/// Temperature 10000^(2d/D) for frequency index d.
double pe_temperature(std::size_t d, std::size_t depth);

/// pe[i,j,2d] = pe[i,j,2d+1] = sin(i / T_d) + cos(j / T_d), d < D/2.
PosEncoding sinusoidal_pe(std::size_t height, std::size_t width, std::size_t depth);

/// Hadamard gate: cold cells become exactly 0, hot cells keep pe bit-for-bit.
PosEncoding masked_pe(const PosEncoding& pe, const MaskFilter& mask);

/// Row-major partition of the grid into hot (> tau) and cold (<= tau) cells.
RegionPartition classify_regions(const Tensor& heat, float tau);

}  // namespace hmpe
