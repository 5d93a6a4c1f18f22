#include "hmpe/mask_pe.hpp"

#include <cmath>
#include <stdexcept>

namespace hmpe {

namespace {

void check_tau(float tau) {
  if (!(tau >= 0.0F && tau < 1.0F)) throw std::invalid_argument("tau must lie in [0, 1)");
}

}  // namespace

MaskFilter mask_from_heatmap(const Tensor& heat, float tau) {
  require_rank(heat, 2, "mask_from_heatmap");
  check_tau(tau);
  MaskFilter m{Tensor(heat.shape()), tau};
  for (std::size_t i = 0; i < heat.size(); ++i) m.mask[i] = heat[i] > tau ? 1.0F : 0.0F;
  return m;
}

double pe_temperature(std::size_t d, std::size_t depth) {
  return std::pow(10000.0, 2.0 * static_cast<double>(d) / static_cast<double>(depth));
}

PosEncoding sinusoidal_pe(std::size_t height, std::size_t width, std::size_t depth) {
  if (depth < 2 || depth % 2 != 0) throw std::invalid_argument("sinusoidal_pe: depth must be even and >= 2");
  PosEncoding out{Tensor({height, width, depth})};
  for (std::size_t d = 0; d < depth / 2; ++d) {
    const double temp = pe_temperature(d, depth);
    for (std::size_t i = 0; i < height; ++i) {
      const double s = std::sin(static_cast<double>(i) / temp);
      for (std::size_t j = 0; j < width; ++j) {
        const auto v = static_cast<float>(s + std::cos(static_cast<double>(j) / temp));
        out.pe.at(i, j, 2 * d) = v;
        out.pe.at(i, j, 2 * d + 1) = v;
      }
    }
  }
  return out;
}

PosEncoding masked_pe(const PosEncoding& pe, const MaskFilter& mask) {
  require_rank(mask.mask, 2, "masked_pe mask");
  if (pe.height() != mask.mask.dim(0) || pe.width() != mask.mask.dim(1)) {
    throw ShapeError("masked_pe: encoding " + shape_to_string(pe.pe.shape()) + " vs mask " +
                     shape_to_string(mask.mask.shape()));
  }
  PosEncoding out{Tensor(pe.pe.shape())};
  for (std::size_t i = 0; i < pe.height(); ++i)
    for (std::size_t j = 0; j < pe.width(); ++j)
      if (mask.mask.at(i, j) != 0.0F)
        for (std::size_t d = 0; d < pe.depth(); ++d) out.pe.at(i, j, d) = pe.pe.at(i, j, d);
  return out;
}

RegionPartition classify_regions(const Tensor& heat, float tau) {
  const auto m = mask_from_heatmap(heat, tau);
  RegionPartition parts;
  for (std::size_t i = 0; i < heat.dim(0); ++i)
    for (std::size_t j = 0; j < heat.dim(1); ++j)
      (m.mask.at(i, j) != 0.0F ? parts.hot : parts.cold).push_back({i, j});
  return parts;
}

}  // namespace hmpe
