#pragma once

#include <cstddef>
#include <vector>

#include "hmpe/mask_pe.hpp"
#include "hmpe/numerics.hpp"
#include "hmpe/rng.hpp"
#include "hmpe/tensor.hpp"

namespace hmpe {

enum class HeatSource { Class, Bbox, Mixed };

const char* heat_source_name(HeatSource s);

/// Heatmap cells flattened row-major into (N, D) tokens, N = H * W.
struct EmbeddingSeq {
  Tensor tokens;
  HeatSource source = HeatSource::Mixed;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const { return tokens.dim(0); }
  std::size_t depth() const { return tokens.dim(1); }
};

/// Bias-free projections applied to [E_class | E_bbox]; each is (D_out, 2D).
struct QkvProjections {
  Tensor w_q;
  Tensor w_k;
  Tensor w_v;

  static QkvProjections random(std::size_t depth, std::size_t depth_out, Rng& rng);
};

struct QkvTriple {
  Tensor q;
  Tensor k;
  Tensor v;
};

struct AttentionResult {
  Tensor output;   // (N, D)
  Tensor weights;  // (heads, N, M), each row a distribution over keys
};

/// token(p) = proj * h(p) + pe(p), with proj a (D, 1) column.
EmbeddingSeq embed_heatmap(const Tensor& heat, const Tensor& proj, const PosEncoding& pe, HeatSource source);

QkvTriple fuse_qkv(const EmbeddingSeq& e_class, const EmbeddingSeq& e_bbox, const QkvProjections& proj,
                   MacCounter* counter = nullptr);

/// Raw scaled logits (heads, N, M): <q_h, k_h> / sqrt(D / heads).
Tensor attention_logits(const Tensor& q, const Tensor& k, std::size_t heads);

/// Scaled dot-product attention per head over equal channel slices, heads
/// concatenated back to (N, D). D must be divisible by heads.
AttentionResult multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                    MacCounter* counter = nullptr);

/// Bilinearly upsamples every map to (height, width) and averages them. Each
/// map must divide the target by the same integer factor along both axes.
Tensor multiscale_fuse(const std::vector<Tensor>& maps, std::size_t height, std::size_t width);

/// Pyramid of the heatmap at the given pooling scales (scale 1 = itself),
/// fused back to full resolution. Scales that do not divide the grid are
/// skipped.
Tensor multiscale_heat(const Tensor& heat, const std::vector<std::size_t>& scales);

struct EncoderConfig {
  float tau = 0.35F;
  std::size_t depth = 64;
  std::size_t heads = 8;
  std::vector<std::size_t> scales{1, 2, 4};
};

struct EncoderWeights {
  Tensor proj_class;  // (D, 1)
  Tensor proj_bbox;   // (D, 1)
  QkvProjections qkv;

  static EncoderWeights random(std::size_t depth, Rng& rng);
};

struct EncoderOutput {
  Tensor fused_class;  // multiscale + normalized class heat (H, W)
  Tensor fused_bbox;
  MaskFilter mask_class;
  MaskFilter mask_bbox;
  EmbeddingSeq e_class;
  EmbeddingSeq e_bbox;
  QkvTriple qkv;
  AttentionResult attention;  // self-attention over the fused tokens
};

/// Multiscale fusion, mask gating, embedding, Q/K/V projection and one
/// multi-head self-attention pass.
EncoderOutput run_encoder(const Tensor& class_heat, const Tensor& bbox_heat, const EncoderConfig& cfg,
                          const EncoderWeights& weights, MacCounter* counter = nullptr);

}  // namespace hmpe
