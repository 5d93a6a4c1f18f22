#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmpe/heads.hpp"
#include "hmpe/heatmap.hpp"
#include "hmpe/hidq.hpp"
#include "hmpe/kv.hpp"
#include "hmpe/lsconv.hpp"
#include "hmpe/mohfe.hpp"
#include "hmpe/viz.hpp"

namespace hmpe {

/// Thrown for invalid configuration; the message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 8;
  std::size_t depth = 64;
  std::size_t heads = 8;
  std::size_t layers = 3;
  std::size_t points = 4;
  std::size_t top_m = 100;
  float lambda = 0.5F;
  float tau = 0.35F;
  float fusion = 0.5F;
  float huber_delta = 1.0F;
  float class_bias = -1.0F;
  std::size_t scale = 6;
  float alpha = 0.6F;
  BboxGradMode bbox_grad = BboxGradMode::Mixed;
  bool unit_shift = true;
  bool nine_taps = false;
  bool soft_reweight = false;
  Upscale upscale = Upscale::Bilinear;
  std::string lsconv_axis = "xy";  // x, y or xy
  std::optional<BoxTarget> target;  // derived from the seed when absent

  /// Throws ConfigError naming the first key that violates a module
  /// precondition.
  void validate() const;
  BoxTarget resolved_target() const;
  DecoderConfig decoder() const;
  EncoderConfig encoder() const;
  LsConvParams lsconv_params() const;
};

/// Every recognised key with its current value.
KeyValues config_to_key_values(const PipelineConfig& cfg);
/// Applies key=value overrides on top of `base`; unknown keys are rejected.
PipelineConfig apply_key_values(PipelineConfig base, const KeyValues& kv);

struct SyntheticScene {
  Tensor image;        // (3, H*s, W*s), values in [0, 1]
  Tensor activations;  // (K, H, W), nonnegative
  BoxTarget target;
};

/// Box with center in [0.3, 0.7]^2 and size in [0.2, 0.4]^2 drawn from the seed.
BoxTarget random_target(std::uint64_t seed);

/// Nonnegative activations: per-channel scaled Gaussian bump centred on the
/// target plus seeded uniform noise; a matching RGB image at `image_scale`.
SyntheticScene synth(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t channels,
                     std::size_t image_scale, const BoxTarget& target);

struct SceneHeads {
  ClassHead class_head;
  BboxHead bbox_head;
};

/// Seeded toy heads for a scene. The class head carries `class_bias`; the
/// bbox head has zero bias so predictions start at the box prior centre.
SceneHeads synth_heads(std::uint64_t seed, const Shape& activation_shape, float class_bias, float huber_delta);

struct PipelineArtifacts {
  PipelineConfig config;
  SyntheticScene scene;
  Tensor lsconv_activations;
  float lsconv_penalty = 0.0F;
  HeatmapTriplet triplet;
  MaskFilter mask_mixed;
  PosEncoding pe_mixed;
  EncoderOutput encoder;
  std::uint64_t encoder_macs = 0;
  QuerySet all_queries;
  std::optional<QuerySet> queries;  // nullopt: no query above tau
  DecoderResult decoder;
  std::vector<std::pair<std::string, RasterImage>> renders;
  std::size_t clamped_render_values = 0;
};

struct EncoderStage {
  EncoderOutput output;
  std::uint64_t macs = 0;
};

/// Encoder stage with weights drawn from the config seed.
EncoderStage run_encoder_stage(const PipelineConfig& cfg, const Tensor& class_heat, const Tensor& bbox_heat);

struct QueryStage {
  QuerySet all;
  std::optional<QuerySet> kept;
  MaskFilter mask;
  PosEncoding pe;
};

/// Mixed-heat query induction and suppression with weights drawn from the
/// config seed.
QueryStage run_query_stage(const PipelineConfig& cfg, const Tensor& mixed_heat);

/// Runs every stage in memory. Throws std::runtime_error prefixed with the
/// failing stage name.
PipelineArtifacts compute_pipeline(const PipelineConfig& cfg);

struct ManifestEntry {
  std::string path;  // relative to the artifact directory
  std::string sha256;
};

/// Writes all stage outputs under `dir` plus manifest.txt, returning the
/// manifest entries in write order.
std::vector<ManifestEntry> write_pipeline(const PipelineArtifacts& art, const std::filesystem::path& dir);

std::string format_manifest(const std::vector<ManifestEntry>& entries);
/// Re-hashes every file listed in dir/manifest.txt; returns mismatching paths.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace hmpe
