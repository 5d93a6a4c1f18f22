#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hmpe/mohfe.hpp"
#include "hmpe/numerics.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

/// Decoder queries with the heat score and grid cell each one came from.
struct QuerySet {
  Tensor queries;                  // (M, D)
  Tensor scores;                   // (M)
  std::vector<std::size_t> cells;  // flat row-major cell index per query
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;

  std::size_t size() const { return queries.dim(0); }
  std::size_t depth() const { return queries.dim(1); }
};

/// Deformable attention arguments for a single head. Reference points and
/// offsets are in normalized [0, 1] grid units, (x, y) order.
struct DeformAttnParams {
  std::size_t points = 4;
  Tensor ref_points;    // (M, 2)
  Tensor offsets;       // (M, P, 2)
  Tensor attn_weights;  // (M, P), rows are distributions
};

struct DecoderConfig {
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t points = 4;
  std::size_t depth = 64;
  bool soft_reweight = false;

  static constexpr std::size_t kMaxLayers = 8;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// queries = E_mixed * w_q^T; scores are the normalized mixed heat per cell.
QuerySet init_queries(const EmbeddingSeq& e_mixed, const Tensor& w_q, const Tensor& mixed_heat);

/// Keeps queries with score > tau, then the top_m by score. Ties go to the
/// lower cell index; output is sorted by descending score. Returns nullopt
/// when no query clears tau.
std::optional<QuerySet> suppress_queries(const QuerySet& qs, float tau, std::size_t top_m);

/// Each query's own cell as a normalized reference point: (col/(W-1), row/(H-1)).
Tensor default_ref_points(const QuerySet& qs);

/// out(m) = sum_p w(m,p) * bilinear(V, (ref(m) + off(m,p)) scaled to pixels).
/// v_enc is (H*W, D) row-major over the grid; out-of-grid samples clamp.
Tensor deform_attention(const QuerySet& qs, const Tensor& v_enc, std::size_t grid_height, std::size_t grid_width,
                        const DeformAttnParams& params, MacCounter* counter = nullptr);

struct DecoderLayerWeights {
  Tensor value;   // (D, D) projection of V_enc
  Tensor offset;  // (heads * P * 2, D)
  Tensor attn;    // (heads * P, D)
  Tensor out;     // (D, D)
  Tensor ff;      // (D, D) position-wise linear
};

struct DecoderWeights {
  std::vector<DecoderLayerWeights> layers;

  /// Layer l is drawn from its own stream derived from (seed, l), so the
  /// first L layers are identical whatever the stack depth.
  static DecoderWeights random(const DecoderConfig& cfg, std::uint64_t seed);
};

struct DecoderResult {
  std::vector<Tensor> layer_outputs;     // (M, D) each, index l = Det^l
  std::vector<std::uint64_t> layer_macs;  // counted while executing

  std::uint64_t total_macs() const;
  /// Text table: layer, MACs, cumulative MACs.
  std::string cost_report() const;
};

/// Closed-form MACs for one decoder layer.
std::uint64_t decoder_layer_macs(std::size_t queries, std::size_t tokens, std::size_t depth, std::size_t points,
                                 std::size_t heads, bool soft_reweight);

/// L stacked layers of (multi-head deformable attention + residual) followed
/// by (position-wise linear + residual). No normalization layers.
DecoderResult decoder_stack(const DecoderConfig& cfg, const DecoderWeights& weights, const QuerySet& qs,
                            const Tensor& k_enc, const Tensor& v_enc);

struct AblationRow {
  std::size_t layers = 0;
  Shape output_shape;
  std::uint64_t decoder_macs = 0;
  std::uint64_t closed_form_macs = 0;
  std::uint64_t total_macs = 0;  // encoder + decoder
};

/// Runs decoder_stack for every depth in [from, to] with shared weights.
std::vector<AblationRow> ablate_decoder(const DecoderConfig& base, std::uint64_t weight_seed, const QuerySet& qs,
                                        const Tensor& k_enc, const Tensor& v_enc, std::size_t from, std::size_t to,
                                        std::uint64_t encoder_macs);

std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace hmpe
