#include "hmpe/hidq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hmpe/rng.hpp"

namespace hmpe {

void DecoderConfig::validate() const {
  if (layers < 1 || layers > kMaxLayers) throw std::invalid_argument("layers must lie in [1, 8]");
  if (heads == 0) throw std::invalid_argument("heads must be positive");
  if (points == 0) throw std::invalid_argument("points must be positive");
  if (depth == 0 || depth % heads != 0) throw std::invalid_argument("depth must be a positive multiple of heads");
}

QuerySet init_queries(const EmbeddingSeq& e_mixed, const Tensor& w_q, const Tensor& mixed_heat) {
  require_rank(mixed_heat, 2, "init_queries heat");
  if (mixed_heat.dim(0) * mixed_heat.dim(1) != e_mixed.count()) {
    throw ShapeError("init_queries: heat " + shape_to_string(mixed_heat.shape()) + " does not cover " +
                     std::to_string(e_mixed.count()) + " tokens");
  }
  QuerySet qs;
  qs.queries = linear_map(w_q, std::nullopt, e_mixed.tokens);
  qs.scores = Tensor({e_mixed.count()});
  qs.cells.resize(e_mixed.count());
  std::iota(qs.cells.begin(), qs.cells.end(), std::size_t{0});
  std::copy(mixed_heat.data().begin(), mixed_heat.data().end(), qs.scores.data().begin());
  qs.grid_height = mixed_heat.dim(0);
  qs.grid_width = mixed_heat.dim(1);
  return qs;
}

std::optional<QuerySet> suppress_queries(const QuerySet& qs, float tau, std::size_t top_m) {
  if (top_m == 0) throw std::invalid_argument("suppress_queries: top_m must be >= 1");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < qs.size(); ++i)
    if (qs.scores[i] > tau) keep.push_back(i);
  if (keep.empty()) return std::nullopt;
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (qs.scores[a] != qs.scores[b]) return qs.scores[a] > qs.scores[b];
    return qs.cells[a] < qs.cells[b];
  });
  if (keep.size() > top_m) keep.resize(top_m);
  const std::size_t d = qs.depth();
  QuerySet out;
  out.queries = Tensor({keep.size(), d});
  out.scores = Tensor({keep.size()});
  out.grid_height = qs.grid_height;
  out.grid_width = qs.grid_width;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out.queries.at(r, c) = qs.queries.at(keep[r], c);
    out.scores[r] = qs.scores[keep[r]];
    out.cells.push_back(qs.cells[keep[r]]);
  }
  return out;
}

namespace {

double to_normalized(std::size_t index, std::size_t extent) {
  return extent > 1 ? static_cast<double>(index) / static_cast<double>(extent - 1) : 0.0;
}

double pixel_scale(std::size_t extent) { return extent > 1 ? static_cast<double>(extent - 1) : 0.0; }

Tensor as_grid(const Tensor& tokens, std::size_t h, std::size_t w, const char* what) {
  require_rank(tokens, 2, what);
  if (tokens.dim(0) != h * w) {
    throw ShapeError(std::string(what) + ": " + std::to_string(tokens.dim(0)) + " tokens for a " + std::to_string(h) +
                     "x" + std::to_string(w) + " grid");
  }
  return tokens.reshaped({h, w, tokens.dim(1)});
}

}  // namespace

Tensor default_ref_points(const QuerySet& qs) {
  Tensor ref({qs.size(), 2});
  for (std::size_t m = 0; m < qs.size(); ++m) {
    ref.at(m, 0) = static_cast<float>(to_normalized(qs.cells[m] % qs.grid_width, qs.grid_width));
    ref.at(m, 1) = static_cast<float>(to_normalized(qs.cells[m] / qs.grid_width, qs.grid_height));
  }
  return ref;
}

Tensor deform_attention(const QuerySet& qs, const Tensor& v_enc, std::size_t grid_height, std::size_t grid_width,
                        const DeformAttnParams& params, MacCounter* counter) {
  const Tensor value = as_grid(v_enc, grid_height, grid_width, "deform_attention values");
  const std::size_t m_count = qs.size();
  const std::size_t p_count = params.points;
  const std::size_t d = v_enc.dim(1);
  if (params.ref_points.shape() != Shape{m_count, 2} || params.offsets.shape() != Shape{m_count, p_count, 2} ||
      params.attn_weights.shape() != Shape{m_count, p_count}) {
    throw ShapeError("deform_attention: parameter shapes do not match " + std::to_string(m_count) + " queries x " +
                     std::to_string(p_count) + " points");
  }
  for (std::size_t m = 0; m < m_count; ++m) {
    double sum = 0.0;
    for (std::size_t p = 0; p < p_count; ++p) {
      const float w = params.attn_weights.at(m, p);
      if (w < 0.0F) throw std::invalid_argument("deform_attention: negative attention weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-4) throw std::invalid_argument("deform_attention: attention weights must sum to 1");
  }
  const double sx = pixel_scale(grid_width);
  const double sy = pixel_scale(grid_height);
  Tensor out({m_count, d});
  std::vector<double> acc(d);
  for (std::size_t m = 0; m < m_count; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < p_count; ++p) {
      const double x = (static_cast<double>(params.ref_points.at(m, 0)) + params.offsets.at(m, p, 0)) * sx;
      const double y = (static_cast<double>(params.ref_points.at(m, 1)) + params.offsets.at(m, p, 1)) * sy;
      bilinear_accumulate(value, x, y, 0, d, params.attn_weights.at(m, p), acc, counter);
    }
    for (std::size_t c = 0; c < d; ++c) out.at(m, c) = static_cast<float>(acc[c]);
  }
  return out;
}

DecoderWeights DecoderWeights::random(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.depth;
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));
  DecoderWeights w;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Rng rng(derive_seed(seed, "decoder-layer-" + std::to_string(l)));
    DecoderLayerWeights lw;
    lw.value = rng.normal_tensor({d, d}, unit);
    lw.offset = rng.normal_tensor({cfg.heads * cfg.points * 2, d}, unit);
    lw.attn = rng.normal_tensor({cfg.heads * cfg.points, d}, unit);
    lw.out = rng.normal_tensor({d, d}, 0.5 * unit);
    lw.ff = rng.normal_tensor({d, d}, 0.5 * unit);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

std::uint64_t DecoderResult::total_macs() const {
  return std::accumulate(layer_macs.begin(), layer_macs.end(), std::uint64_t{0});
}

std::string DecoderResult::cost_report() const {
  std::ostringstream os;
  os << "layer\tmacs\tcumulative_macs\n";
  std::uint64_t cum = 0;
  for (std::size_t l = 0; l < layer_macs.size(); ++l) {
    cum += layer_macs[l];
    os << l + 1 << '\t' << layer_macs[l] << '\t' << cum << '\n';
  }
  return os.str();
}

std::uint64_t decoder_layer_macs(std::size_t queries, std::size_t tokens, std::size_t depth, std::size_t points,
                                 std::size_t heads, bool soft_reweight) {
  const std::uint64_t m = queries, n = tokens, d = depth, p = points, h = heads;
  std::uint64_t macs = n * d * d;  // value projection
  macs += m * d * h * p * 2;       // sampling offsets
  macs += m * d * h * p;           // attention logits
  macs += 5 * m * p * d;           // bilinear gather (4) + weighted sum (1) per channel
  macs += 2 * m * d * d;           // output projection + position-wise linear
  if (soft_reweight) {
    macs += 6 * m * p * d;  // key gather (5) + query-key dot (1) per channel
    macs += m * h * p;      // score scaling of each logit
  }
  return macs;
}

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(static_cast<double>(a[i]) + b[i]);
  return out;
}

Tensor decoder_layer(const DecoderConfig& cfg, const DecoderLayerWeights& w, const QuerySet& qs, const Tensor& x,
                     const Tensor& keys, const Tensor& v_enc, MacCounter& counter) {
  const std::size_t gh = qs.grid_height;
  const std::size_t gw = qs.grid_width;
  const std::size_t m_count = x.dim(0);
  const std::size_t d = cfg.depth;
  const std::size_t heads = cfg.heads;
  const std::size_t dh = d / heads;
  const std::size_t pts = cfg.points;

  const Tensor value = as_grid(linear_map(w.value, std::nullopt, v_enc, &counter), gh, gw, "decoder values");
  const Tensor offsets = linear_map(w.offset, std::nullopt, x, &counter);
  const Tensor logits = linear_map(w.attn, std::nullopt, x, &counter);

  const double sx = pixel_scale(gw);
  const double sy = pixel_scale(gh);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor sampled({m_count, d});
  std::vector<double> acc(d), key(dh), weight(pts), px(pts), py(pts);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double ref_x = to_normalized(qs.cells[m] % gw, gw) * sx;
    const double ref_y = to_normalized(qs.cells[m] / gw, gh) * sy;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      double row_max = -HUGE_VAL;
      for (std::size_t p = 0; p < pts; ++p) {
        const std::size_t slot = h * pts + p;
        // Offsets are produced directly in pixel units.
        px[p] = ref_x + offsets.at(m, 2 * slot);
        py[p] = ref_y + offsets.at(m, 2 * slot + 1);
        double logit = logits.at(m, slot);
        if (cfg.soft_reweight) {
          std::fill(key.begin(), key.end(), 0.0);
          bilinear_accumulate(keys, px[p], py[p], h * dh, (h + 1) * dh, 1.0, key, &counter);
          double qk = 0.0;
          for (std::size_t c = 0; c < dh; ++c) qk += x.at(m, h * dh + c) * key[c];
          counter.add(dh);
          logit = (logit + qk * inv_sqrt_dh) * qs.scores[m];
          counter.add(1);
        }
        weight[p] = logit;
        row_max = std::max(row_max, logit);
      }
      double sum = 0.0;
      for (std::size_t p = 0; p < pts; ++p) sum += (weight[p] = std::exp(weight[p] - row_max));
      for (std::size_t p = 0; p < pts; ++p) {
        bilinear_accumulate(value, px[p], py[p], h * dh, (h + 1) * dh, weight[p] / sum,
                            std::span<double>(acc).subspan(h * dh, dh), &counter);
      }
    }
    for (std::size_t c = 0; c < d; ++c) sampled.at(m, c) = static_cast<float>(acc[c]);
  }
  const Tensor x1 = add(x, linear_map(w.out, std::nullopt, sampled, &counter));
  Tensor x2 = add(x1, linear_map(w.ff, std::nullopt, x1, &counter));
  require_finite(x2, "decoder layer");
  return x2;
}

}  // namespace

DecoderResult decoder_stack(const DecoderConfig& cfg, const DecoderWeights& weights, const QuerySet& qs,
                            const Tensor& k_enc, const Tensor& v_enc) {
  cfg.validate();
  if (weights.layers.size() < cfg.layers) throw std::invalid_argument("decoder_stack: not enough layer weights");
  if (qs.depth() != cfg.depth || v_enc.rank() != 2 || v_enc.dim(1) != cfg.depth) {
    throw ShapeError("decoder_stack: query/value width must equal depth " + std::to_string(cfg.depth));
  }
  require_same_shape(k_enc, v_enc, "decoder_stack keys vs values");
  const Tensor keys = as_grid(k_enc, qs.grid_height, qs.grid_width, "decoder keys");
  DecoderResult res;
  Tensor x = qs.queries;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    MacCounter counter;
    x = decoder_layer(cfg, weights.layers[l], qs, x, keys, v_enc, counter);
    res.layer_outputs.push_back(x);
    res.layer_macs.push_back(counter.macs);
  }
  return res;
}

std::vector<AblationRow> ablate_decoder(const DecoderConfig& base, std::uint64_t weight_seed, const QuerySet& qs,
                                        const Tensor& k_enc, const Tensor& v_enc, std::size_t from, std::size_t to,
                                        std::uint64_t encoder_macs) {
  if (from < 1 || to > DecoderConfig::kMaxLayers || from > to)
    throw std::invalid_argument("ablate_decoder: layer range must satisfy 1 <= from <= to <= 8");
  DecoderConfig full = base;
  full.layers = to;
  const DecoderWeights weights = DecoderWeights::random(full, weight_seed);
  std::vector<AblationRow> rows;
  for (std::size_t l = from; l <= to; ++l) {
    DecoderConfig cfg = base;
    cfg.layers = l;
    const auto res = decoder_stack(cfg, weights, qs, k_enc, v_enc);
    AblationRow row;
    row.layers = l;
    row.output_shape = res.layer_outputs.back().shape();
    row.decoder_macs = res.total_macs();
    row.closed_form_macs =
        l * decoder_layer_macs(qs.size(), v_enc.dim(0), cfg.depth, cfg.points, cfg.heads, cfg.soft_reweight);
    row.total_macs = encoder_macs + row.decoder_macs;
    rows.push_back(row);
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "layers\toutput_shape\tdecoder_macs\tclosed_form_macs\ttotal_macs\trelative_cost\n";
  const double base = rows.empty() ? 1.0 : static_cast<double>(rows.front().total_macs);
  for (const auto& r : rows) {
    os << r.layers << '\t' << shape_to_string(r.output_shape) << '\t' << r.decoder_macs << '\t'
       << r.closed_form_macs << '\t' << r.total_macs << '\t';
    os.setf(std::ios::fixed);
    os.precision(4);
    os << static_cast<double>(r.total_macs) / base << '\n';
  }
  return os.str();
}

}  // namespace hmpe
