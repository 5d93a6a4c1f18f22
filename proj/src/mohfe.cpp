#include "hmpe/mohfe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hmpe/heatmap.hpp"

namespace hmpe {

const char* heat_source_name(HeatSource s) {
  switch (s) {
    case HeatSource::Class: return "class";
    case HeatSource::Bbox: return "bbox";
    case HeatSource::Mixed: return "mixed";
  }
  return "?";
}

QkvProjections QkvProjections::random(std::size_t depth, std::size_t depth_out, Rng& rng) {
  const double std = 1.0 / std::sqrt(2.0 * static_cast<double>(depth));
  QkvProjections p;
  p.w_q = rng.normal_tensor({depth_out, 2 * depth}, std);
  p.w_k = rng.normal_tensor({depth_out, 2 * depth}, std);
  p.w_v = rng.normal_tensor({depth_out, 2 * depth}, std);
  return p;
}

EmbeddingSeq embed_heatmap(const Tensor& heat, const Tensor& proj, const PosEncoding& pe, HeatSource source) {
  require_rank(heat, 2, "embed_heatmap heat");
  require_rank(proj, 2, "embed_heatmap projection");
  const std::size_t h = heat.dim(0);
  const std::size_t w = heat.dim(1);
  const std::size_t d = pe.depth();
  if (pe.height() != h || pe.width() != w) {
    throw ShapeError("embed_heatmap: heat " + shape_to_string(heat.shape()) + " vs encoding " +
                     shape_to_string(pe.pe.shape()));
  }
  if (proj.dim(0) != d || proj.dim(1) != 1) {
    throw ShapeError("embed_heatmap: projection must be (" + std::to_string(d) + ",1), got " +
                     shape_to_string(proj.shape()));
  }
  EmbeddingSeq seq{Tensor({h * w, d}), source, h, w};
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double v = heat.at(i, j);
      for (std::size_t c = 0; c < d; ++c) {
        seq.tokens.at(i * w + j, c) = static_cast<float>(static_cast<double>(proj[c]) * v + pe.pe.at(i, j, c));
      }
    }
  }
  return seq;
}

QkvTriple fuse_qkv(const EmbeddingSeq& e_class, const EmbeddingSeq& e_bbox, const QkvProjections& proj,
                   MacCounter* counter) {
  if (e_class.count() != e_bbox.count()) {
    throw ShapeError("fuse_qkv: token counts differ (" + std::to_string(e_class.count()) + " vs " +
                     std::to_string(e_bbox.count()) + ")");
  }
  if (e_class.depth() != e_bbox.depth()) throw ShapeError("fuse_qkv: embedding widths differ");
  const std::size_t n = e_class.count();
  const std::size_t d = e_class.depth();
  Tensor cat({n, 2 * d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      cat.at(r, c) = e_class.tokens.at(r, c);
      cat.at(r, d + c) = e_bbox.tokens.at(r, c);
    }
  }
  return {linear_map(proj.w_q, std::nullopt, cat, counter), linear_map(proj.w_k, std::nullopt, cat, counter),
          linear_map(proj.w_v, std::nullopt, cat, counter)};
}

namespace {

struct HeadGeometry {
  std::size_t n, m, d, dh;
};

HeadGeometry head_geometry(const Tensor& q, const Tensor& k, std::size_t heads) {
  require_rank(q, 2, "attention queries");
  require_rank(k, 2, "attention keys");
  if (q.dim(1) != k.dim(1)) throw ShapeError("attention: query/key widths differ");
  if (heads == 0 || q.dim(1) % heads != 0) {
    throw std::invalid_argument("attention: depth " + std::to_string(q.dim(1)) + " not divisible by heads " +
                                std::to_string(heads));
  }
  return {q.dim(0), k.dim(0), q.dim(1), q.dim(1) / heads};
}

}  // namespace

Tensor attention_logits(const Tensor& q, const Tensor& k, std::size_t heads) {
  const auto g = head_geometry(q, k, heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.dh));
  Tensor logits({heads, g.n, g.m});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t j = 0; j < g.m; ++j) {
        double acc = 0.0;
        for (std::size_t c = h * g.dh; c < (h + 1) * g.dh; ++c) acc += static_cast<double>(q.at(i, c)) * k.at(j, c);
        logits.at(h, i, j) = static_cast<float>(acc * scale);
      }
    }
  }
  return logits;
}

AttentionResult multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                    MacCounter* counter) {
  const auto g = head_geometry(q, k, heads);
  require_same_shape(k, v, "attention keys vs values");
  const Tensor logits = attention_logits(q, k, heads);
  AttentionResult res{Tensor({g.n, g.d}), Tensor({heads, g.n, g.m})};
  std::vector<double> w(g.m);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < g.n; ++i) {
      double row_max = logits.at(h, i, 0);
      for (std::size_t j = 1; j < g.m; ++j) row_max = std::max(row_max, static_cast<double>(logits.at(h, i, j)));
      double sum = 0.0;
      for (std::size_t j = 0; j < g.m; ++j) {
        w[j] = std::exp(static_cast<double>(logits.at(h, i, j)) - row_max);
        sum += w[j];
      }
      for (std::size_t j = 0; j < g.m; ++j) {
        w[j] /= sum;
        res.weights.at(h, i, j) = static_cast<float>(w[j]);
      }
      for (std::size_t c = h * g.dh; c < (h + 1) * g.dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.m; ++j) acc += w[j] * v.at(j, c);
        res.output.at(i, c) = static_cast<float>(acc);
      }
    }
  }
  // Logits and the weighted sum each cost one MAC per (query, key, channel).
  if (counter) counter->add(2ULL * g.n * g.m * g.d);
  require_finite(res.output, "multihead_attention");
  return res;
}

Tensor multiscale_fuse(const std::vector<Tensor>& maps, std::size_t height, std::size_t width) {
  if (maps.empty()) throw std::invalid_argument("multiscale_fuse: no maps");
  std::vector<double> acc(height * width, 0.0);
  for (const auto& m : maps) {
    require_rank(m, 2, "multiscale_fuse");
    if (height % m.dim(0) != 0 || width % m.dim(1) != 0 || height / m.dim(0) != width / m.dim(1)) {
      throw ShapeError("multiscale_fuse: map " + shape_to_string(m.shape()) + " does not divide target (" +
                       std::to_string(height) + "," + std::to_string(width) + ") by a common factor");
    }
    const Tensor up = upsample_bilinear(m, height / m.dim(0));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up[i];
  }
  Tensor out({height, width});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(maps.size()));
  return out;
}

Tensor multiscale_heat(const Tensor& heat, const std::vector<std::size_t>& scales) {
  require_rank(heat, 2, "multiscale_heat");
  std::vector<Tensor> pyramid;
  for (auto s : scales) {
    if (s == 0 || heat.dim(0) % s != 0 || heat.dim(1) % s != 0) continue;
    pyramid.push_back(s == 1 ? heat : average_pool(heat, s));
  }
  if (pyramid.empty()) pyramid.push_back(heat);
  return multiscale_fuse(pyramid, heat.dim(0), heat.dim(1));
}

EncoderWeights EncoderWeights::random(std::size_t depth, Rng& rng) {
  EncoderWeights w;
  w.proj_class = rng.normal_tensor({depth, 1}, 1.0);
  w.proj_bbox = rng.normal_tensor({depth, 1}, 1.0);
  w.qkv = QkvProjections::random(depth, depth, rng);
  return w;
}

EncoderOutput run_encoder(const Tensor& class_heat, const Tensor& bbox_heat, const EncoderConfig& cfg,
                          const EncoderWeights& weights, MacCounter* counter) {
  require_rank(class_heat, 2, "encoder class heat");
  require_same_shape(class_heat, bbox_heat, "encoder heatmaps");
  const std::size_t h = class_heat.dim(0);
  const std::size_t w = class_heat.dim(1);
  EncoderOutput out;
  out.fused_class = normalize_heatmap(multiscale_heat(class_heat, cfg.scales));
  out.fused_bbox = normalize_heatmap(multiscale_heat(bbox_heat, cfg.scales));
  out.mask_class = mask_from_heatmap(out.fused_class, cfg.tau);
  out.mask_bbox = mask_from_heatmap(out.fused_bbox, cfg.tau);
  const PosEncoding pe = sinusoidal_pe(h, w, cfg.depth);
  out.e_class = embed_heatmap(out.fused_class, weights.proj_class, masked_pe(pe, out.mask_class), HeatSource::Class);
  out.e_bbox = embed_heatmap(out.fused_bbox, weights.proj_bbox, masked_pe(pe, out.mask_bbox), HeatSource::Bbox);
  out.qkv = fuse_qkv(out.e_class, out.e_bbox, weights.qkv, counter);
  out.attention = multihead_attention(out.qkv.q, out.qkv.k, out.qkv.v, cfg.heads, counter);
  return out;
}

}  // namespace hmpe
