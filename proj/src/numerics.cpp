#include "hmpe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace hmpe {

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = std::max(v, 0.0F);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor out(x.shape());
  std::vector<double> e(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) row_max = std::max(row_max, static_cast<double>(x.at(r, c)));
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      e[c] = std::exp(static_cast<double>(x.at(r, c)) - row_max);
      sum += e[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = static_cast<float>(e[c] / sum);
  }
  require_finite(out, "softmax_rows");
  return out;
}

namespace {

struct Corners {
  std::size_t x0, x1, y0, y1;
  double fx, fy;
};

Corners corners_for(double x, double y, std::size_t height, std::size_t width) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  Corners c{};
  c.x0 = static_cast<std::size_t>(std::floor(x));
  c.y0 = static_cast<std::size_t>(std::floor(y));
  c.x1 = std::min(c.x0 + 1, width - 1);
  c.y1 = std::min(c.y0 + 1, height - 1);
  c.fx = x - static_cast<double>(c.x0);
  c.fy = y - static_cast<double>(c.y0);
  return c;
}

}  // namespace

float bilinear_sample(const Tensor& map, float x, float y) {
  require_rank(map, 2, "bilinear_sample");
  const auto c = corners_for(x, y, map.dim(0), map.dim(1));
  const double v00 = map.at(c.y0, c.x0);
  const double v01 = map.at(c.y0, c.x1);
  const double v10 = map.at(c.y1, c.x0);
  const double v11 = map.at(c.y1, c.x1);
  const double top = v00 * (1.0 - c.fx) + v01 * c.fx;
  const double bottom = v10 * (1.0 - c.fx) + v11 * c.fx;
  return static_cast<float>(top * (1.0 - c.fy) + bottom * c.fy);
}

void bilinear_accumulate(const Tensor& map_hwc, double x, double y, std::size_t c_begin,
                         std::size_t c_end, double weight, std::span<double> out, MacCounter* counter) {
  require_rank(map_hwc, 3, "bilinear_accumulate");
  const std::size_t channels = map_hwc.dim(2);
  if (c_begin > c_end || c_end > channels || out.size() < c_end - c_begin) {
    throw ShapeError("bilinear_accumulate: channel range out of bounds");
  }
  const auto c = corners_for(x, y, map_hwc.dim(0), map_hwc.dim(1));
  const double w00 = (1.0 - c.fx) * (1.0 - c.fy);
  const double w01 = c.fx * (1.0 - c.fy);
  const double w10 = (1.0 - c.fx) * c.fy;
  const double w11 = c.fx * c.fy;
  for (std::size_t ch = c_begin; ch < c_end; ++ch) {
    double v = 0.0;
    v += w00 * map_hwc.at(c.y0, c.x0, ch);
    v += w01 * map_hwc.at(c.y0, c.x1, ch);
    v += w10 * map_hwc.at(c.y1, c.x0, ch);
    v += w11 * map_hwc.at(c.y1, c.x1, ch);
    out[ch - c_begin] += weight * v;
  }
  if (counter) counter->add(5 * (c_end - c_begin));
}

Tensor upsample_bilinear(const Tensor& map, std::size_t factor) {
  require_rank(map, 2, "upsample_bilinear");
  if (factor == 0) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
  const std::size_t h = map.dim(0);
  const std::size_t w = map.dim(1);
  Tensor out({h * factor, w * factor});
  const double f = static_cast<double>(factor);
  for (std::size_t oy = 0; oy < h * factor; ++oy) {
    const double sy = (static_cast<double>(oy) + 0.5) / f - 0.5;
    for (std::size_t ox = 0; ox < w * factor; ++ox) {
      const double sx = (static_cast<double>(ox) + 0.5) / f - 0.5;
      const auto c = corners_for(sx, sy, h, w);
      const double top = map.at(c.y0, c.x0) * (1.0 - c.fx) + map.at(c.y0, c.x1) * c.fx;
      const double bottom = map.at(c.y1, c.x0) * (1.0 - c.fx) + map.at(c.y1, c.x1) * c.fx;
      out.at(oy, ox) = static_cast<float>(top * (1.0 - c.fy) + bottom * c.fy);
    }
  }
  return out;
}

Tensor upsample_nearest(const Tensor& map, std::size_t factor) {
  require_rank(map, 2, "upsample_nearest");
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  Tensor out({map.dim(0) * factor, map.dim(1) * factor});
  for (std::size_t oy = 0; oy < out.dim(0); ++oy)
    for (std::size_t ox = 0; ox < out.dim(1); ++ox) out.at(oy, ox) = map.at(oy / factor, ox / factor);
  return out;
}

Tensor average_pool(const Tensor& map, std::size_t factor) {
  require_rank(map, 2, "average_pool");
  if (factor == 0 || map.dim(0) % factor != 0 || map.dim(1) % factor != 0) {
    throw ShapeError("average_pool: factor " + std::to_string(factor) + " does not divide " +
                     shape_to_string(map.shape()));
  }
  const std::size_t oh = map.dim(0) / factor;
  const std::size_t ow = map.dim(1) / factor;
  Tensor out({oh, ow});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double sum = 0.0;
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) sum += map.at(y * factor + dy, x * factor + dx);
      out.at(y, x) = static_cast<float>(sum * inv);
    }
  }
  return out;
}

Tensor linear_map(const Tensor& weight, const std::optional<Tensor>& bias, const Tensor& x,
                  MacCounter* counter) {
  require_rank(weight, 2, "linear_map weight");
  require_rank(x, 2, "linear_map input");
  const std::size_t rows = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t outs = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear_map: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != outs)) {
    throw ShapeError("linear_map: bias " + shape_to_string(bias->shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()));
  }
  Tensor out({rows, outs});
  const auto w = weight.data();
  const auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < outs; ++o) {
      double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
      const float* wr = &w[o * in];
      const float* xr = &xs[r * in];
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * xr[i];
      out.at(r, o) = static_cast<float>(acc);
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(rows) * outs * in);
  require_finite(out, "linear_map");
  return out;
}

double default_fd_step(int order) {
  switch (order) {
    case 1: return 1e-4;
    case 2: return 1e-3;
    case 3: return 5e-2;
    default: throw std::invalid_argument("finite_diff_grad: order must be 1, 2 or 3");
  }
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, int order, double h) {
  if (order < 1 || order > 3) throw std::invalid_argument("finite_diff_grad: order must be 1, 2 or 3");
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<double> point(x.data().begin(), x.data().end());
  auto eval_at = [&](std::size_t i, double shift) {
    const double saved = point[i];
    point[i] = saved + shift;
    const double v = f(point);
    point[i] = saved;
    return v;
  };
  Tensor out(x.shape());
  const double f0 = order == 2 ? f(point) : 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    double d = 0.0;
    switch (order) {
      case 1:
        d = (eval_at(i, h) - eval_at(i, -h)) / (2.0 * h);
        break;
      case 2:
        d = (eval_at(i, h) - 2.0 * f0 + eval_at(i, -h)) / (h * h);
        break;
      case 3:
        // Six-point central stencil, O(h^4) truncation.
        d = (-eval_at(i, 3.0 * h) + 8.0 * eval_at(i, 2.0 * h) - 13.0 * eval_at(i, h) + 13.0 * eval_at(i, -h) -
             8.0 * eval_at(i, -2.0 * h) + eval_at(i, -3.0 * h)) /
            (8.0 * h * h * h);
        break;
    }
    out[i] = static_cast<float>(d);
  }
  require_finite(out, "finite_diff_grad");
  return out;
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, int order) {
  return finite_diff_grad(f, x, order, default_fd_step(order));
}

}  // namespace hmpe
