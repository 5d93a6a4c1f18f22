#include "hmpe/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "hmpe/hmpt_io.hpp"
#include "hmpe/mask_pe.hpp"

namespace hmpe {

namespace {

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError(key + ": expected a nonnegative integer, got '" + text + "'");
  return v;
}

std::size_t parse_size(const std::string& text, const std::string& key) {
  return static_cast<std::size_t>(parse_u64(text, key));
}

float parse_float_key(const std::string& text, const std::string& key) {
  try {
    return static_cast<float>(parse_number(text, key));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::string format_target(const BoxTarget& t) {
  return format_float(t.cx) + "," + format_float(t.cy) + "," + format_float(t.w) + "," + format_float(t.h);
}

void require_range(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError(key + ": " + rule);
}

template <typename F>
auto run_stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

std::vector<std::uint8_t> text_bytes(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

void PipelineConfig::validate() const {
  require_range(height >= 1, "height", "must be >= 1");
  require_range(width >= 1, "width", "must be >= 1");
  require_range(channels >= 1, "channels", "must be >= 1");
  require_range(heads >= 1, "heads", "must be >= 1");
  require_range(depth >= 2 && depth % 2 == 0, "depth", "must be a positive even number");
  require_range(depth % heads == 0, "depth", "must be divisible by heads (" + std::to_string(heads) + ")");
  require_range(layers >= 1 && layers <= DecoderConfig::kMaxLayers, "layers",
                "must lie in [1, " + std::to_string(DecoderConfig::kMaxLayers) + "]");
  require_range(points >= 1, "points", "must be >= 1");
  require_range(top_m >= 1, "top_m", "must be >= 1");
  require_range(lambda >= 0.0F && lambda <= 1.0F, "lambda", "must lie in [0, 1]");
  require_range(tau >= 0.0F && tau < 1.0F, "tau", "must lie in [0, 1)");
  require_range(fusion >= 0.0F && fusion <= 1.0F, "fusion", "must lie in [0, 1]");
  require_range(huber_delta > 0.0F && std::isfinite(huber_delta), "huber_delta", "must be positive");
  require_range(std::isfinite(class_bias), "class_bias", "must be finite");
  require_range(scale >= 1, "scale", "must be >= 1");
  require_range(alpha >= 0.0F && alpha <= 1.0F, "alpha", "must lie in [0, 1]");
  require_range(lsconv_axis == "x" || lsconv_axis == "y" || lsconv_axis == "xy", "lsconv_axis",
                "must be x, y or xy");
  if (target) {
    try {
      target->validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("target: ") + e.what());
    }
  }
}

BoxTarget PipelineConfig::resolved_target() const { return target ? *target : random_target(seed); }

DecoderConfig PipelineConfig::decoder() const { return DecoderConfig{layers, heads, points, depth, soft_reweight}; }

EncoderConfig PipelineConfig::encoder() const {
  EncoderConfig e;
  e.tau = tau;
  e.depth = depth;
  e.heads = heads;
  return e;
}

LsConvParams PipelineConfig::lsconv_params() const {
  LsConvParams p;
  Rng rng(derive_seed(seed, "lsconv"));
  p.predictor = OffsetPredictor::random(rng, 0.1);
  p.fusion = fusion;
  p.unit_shift = unit_shift;
  p.nine_taps = nine_taps;
  return p;
}

KeyValues config_to_key_values(const PipelineConfig& cfg) {
  KeyValues kv{
      {"seed", std::to_string(cfg.seed)},
      {"height", std::to_string(cfg.height)},
      {"width", std::to_string(cfg.width)},
      {"channels", std::to_string(cfg.channels)},
      {"depth", std::to_string(cfg.depth)},
      {"heads", std::to_string(cfg.heads)},
      {"layers", std::to_string(cfg.layers)},
      {"points", std::to_string(cfg.points)},
      {"top_m", std::to_string(cfg.top_m)},
      {"lambda", format_float(cfg.lambda)},
      {"tau", format_float(cfg.tau)},
      {"fusion", format_float(cfg.fusion)},
      {"huber_delta", format_float(cfg.huber_delta)},
      {"class_bias", format_float(cfg.class_bias)},
      {"scale", std::to_string(cfg.scale)},
      {"alpha", format_float(cfg.alpha)},
      {"bbox_grad_order", cfg.bbox_grad == BboxGradMode::Mixed ? "mixed" : "1"},
      {"unit_shift", cfg.unit_shift ? "1" : "0"},
      {"taps", cfg.nine_taps ? "9" : "3"},
      {"soft_reweight", cfg.soft_reweight ? "1" : "0"},
      {"upscale", cfg.upscale == Upscale::Bilinear ? "bilinear" : "nearest"},
      {"lsconv_axis", cfg.lsconv_axis},
  };
  if (cfg.target) kv["target"] = format_target(*cfg.target);
  return kv;
}

PipelineConfig apply_key_values(PipelineConfig cfg, const KeyValues& kv) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"seed", [&](auto& v, auto& k) { cfg.seed = parse_u64(v, k); }},
      {"height", [&](auto& v, auto& k) { cfg.height = parse_size(v, k); }},
      {"width", [&](auto& v, auto& k) { cfg.width = parse_size(v, k); }},
      {"channels", [&](auto& v, auto& k) { cfg.channels = parse_size(v, k); }},
      {"depth", [&](auto& v, auto& k) { cfg.depth = parse_size(v, k); }},
      {"heads", [&](auto& v, auto& k) { cfg.heads = parse_size(v, k); }},
      {"layers", [&](auto& v, auto& k) { cfg.layers = parse_size(v, k); }},
      {"points", [&](auto& v, auto& k) { cfg.points = parse_size(v, k); }},
      {"top_m", [&](auto& v, auto& k) { cfg.top_m = parse_size(v, k); }},
      {"lambda", [&](auto& v, auto& k) { cfg.lambda = parse_float_key(v, k); }},
      {"tau", [&](auto& v, auto& k) { cfg.tau = parse_float_key(v, k); }},
      {"fusion", [&](auto& v, auto& k) { cfg.fusion = parse_float_key(v, k); }},
      {"huber_delta", [&](auto& v, auto& k) { cfg.huber_delta = parse_float_key(v, k); }},
      {"class_bias", [&](auto& v, auto& k) { cfg.class_bias = parse_float_key(v, k); }},
      {"scale", [&](auto& v, auto& k) { cfg.scale = parse_size(v, k); }},
      {"alpha", [&](auto& v, auto& k) { cfg.alpha = parse_float_key(v, k); }},
      {"bbox_grad_order",
       [&](auto& v, auto& k) {
         if (v == "mixed") cfg.bbox_grad = BboxGradMode::Mixed;
         else if (v == "1") cfg.bbox_grad = BboxGradMode::FirstOrder;
         else throw ConfigError(k + ": expected 'mixed' or '1', got '" + v + "'");
       }},
      {"unit_shift", [&](auto& v, auto& k) { cfg.unit_shift = parse_bool(v, k); }},
      {"taps",
       [&](auto& v, auto& k) {
         if (v == "3") cfg.nine_taps = false;
         else if (v == "9") cfg.nine_taps = true;
         else throw ConfigError(k + ": expected 3 or 9, got '" + v + "'");
       }},
      {"soft_reweight", [&](auto& v, auto& k) { cfg.soft_reweight = parse_bool(v, k); }},
      {"upscale",
       [&](auto& v, auto& k) {
         if (v == "bilinear") cfg.upscale = Upscale::Bilinear;
         else if (v == "nearest") cfg.upscale = Upscale::Nearest;
         else throw ConfigError(k + ": expected bilinear or nearest, got '" + v + "'");
       }},
      {"lsconv_axis", [&](auto& v, auto&) { cfg.lsconv_axis = v; }},
      {"target",
       [&](auto& v, auto& k) {
         try {
           cfg.target = parse_box_target(v);
         } catch (const std::exception& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key + ": unknown configuration key");
    it->second(value, key);
  }
  cfg.validate();
  return cfg;
}

BoxTarget random_target(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "target"));
  BoxTarget t;
  t.cx = static_cast<float>(rng.uniform(0.3, 0.7));
  t.cy = static_cast<float>(rng.uniform(0.3, 0.7));
  t.w = static_cast<float>(rng.uniform(0.2, 0.4));
  t.h = static_cast<float>(rng.uniform(0.2, 0.4));
  return t;
}

SyntheticScene synth(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t channels,
                     std::size_t image_scale, const BoxTarget& target) {
  target.validate();
  if (height == 0 || width == 0 || channels == 0 || image_scale == 0)
    throw std::invalid_argument("synth: dimensions and image scale must be >= 1");
  SyntheticScene scene;
  scene.target = target;
  const double fh = static_cast<double>(height);
  const double fw = static_cast<double>(width);
  // Bump centre in cell-index coordinates.
  const double mx = target.cx * fw - 0.5;
  const double my = target.cy * fh - 0.5;
  const double sx = std::max(0.75, 0.25 * target.w * fw);
  const double sy = std::max(0.75, 0.25 * target.h * fh);
  constexpr double kNoise = 0.25;

  Rng amp_rng(derive_seed(seed, "synth-amplitude"));
  Rng noise_rng(derive_seed(seed, "synth-noise"));
  scene.activations = Tensor({channels, height, width});
  for (std::size_t k = 0; k < channels; ++k) {
    const double a = amp_rng.uniform(0.8, 1.2);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double dx = (static_cast<double>(j) - mx) / sx;
        const double dy = (static_cast<double>(i) - my) / sy;
        const double bump = std::exp(-0.5 * (dx * dx + dy * dy));
        scene.activations.at(k, i, j) = static_cast<float>(a * bump + kNoise * noise_rng.uniform());
      }
    }
  }

  Rng img_rng(derive_seed(seed, "synth-image"));
  const std::size_t ih = height * image_scale;
  const std::size_t iw = width * image_scale;
  scene.image = Tensor({3, ih, iw});
  constexpr std::array<double, 3> kBackground{0.18, 0.22, 0.2};
  constexpr std::array<double, 3> kObject{0.85, 0.6, 0.25};
  for (std::size_t y = 0; y < ih; ++y) {
    for (std::size_t x = 0; x < iw; ++x) {
      const float u = static_cast<float>((static_cast<double>(x) + 0.5) / static_cast<double>(iw));
      const float v = static_cast<float>((static_cast<double>(y) + 0.5) / static_cast<double>(ih));
      const bool inside = target.contains(u, v);
      const double n = 0.08 * img_rng.uniform();
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = inside ? kObject[c] : kBackground[c];
        scene.image.at(c, y, x) = static_cast<float>(std::clamp(base + n, 0.0, 1.0));
      }
    }
  }
  return scene;
}

SceneHeads synth_heads(std::uint64_t seed, const Shape& activation_shape, float class_bias, float huber_delta) {
  Rng rng(derive_seed(seed, "heads"));
  SceneHeads heads;
  heads.class_head = ClassHead::random(activation_shape, rng, 0.02, class_bias);
  heads.bbox_head = BboxHead::random(activation_shape, rng, 0.02, huber_delta, 0.0);
  return heads;
}

EncoderStage run_encoder_stage(const PipelineConfig& cfg, const Tensor& class_heat, const Tensor& bbox_heat) {
  Rng rng(derive_seed(cfg.seed, "encoder"));
  const auto weights = EncoderWeights::random(cfg.depth, rng);
  MacCounter counter;
  EncoderStage stage;
  stage.output = run_encoder(class_heat, bbox_heat, cfg.encoder(), weights, &counter);
  stage.macs = counter.macs;
  return stage;
}

QueryStage run_query_stage(const PipelineConfig& cfg, const Tensor& mixed_heat) {
  require_rank(mixed_heat, 2, "query stage heat");
  Rng rng(derive_seed(cfg.seed, "queries"));
  const Tensor proj = rng.normal_tensor({cfg.depth, 1}, 1.0);
  const Tensor w_q = rng.normal_tensor({cfg.depth, cfg.depth}, 1.0 / std::sqrt(static_cast<double>(cfg.depth)));
  QueryStage stage;
  const Tensor heat = normalize_heatmap(mixed_heat);
  stage.mask = mask_from_heatmap(heat, cfg.tau);
  stage.pe = masked_pe(sinusoidal_pe(heat.dim(0), heat.dim(1), cfg.depth), stage.mask);
  const auto e_mixed = embed_heatmap(heat, proj, stage.pe, HeatSource::Mixed);
  stage.all = init_queries(e_mixed, w_q, heat);
  stage.kept = suppress_queries(stage.all, cfg.tau, cfg.top_m);
  return stage;
}

PipelineArtifacts compute_pipeline(const PipelineConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  PipelineArtifacts art;
  art.config = cfg;
  art.scene = run_stage("synth", [&] {
    return synth(cfg.seed, cfg.height, cfg.width, cfg.channels, cfg.scale, cfg.resolved_target());
  });
  run_stage("lsconv", [&] {
    const bool both = cfg.lsconv_axis == "xy";
    const Axis axis = cfg.lsconv_axis == "y" ? Axis::Y : Axis::X;
    auto [out, penalty] = lsconv_channels(art.scene.activations, cfg.lsconv_params(), both, axis);
    art.lsconv_activations = std::move(out);
    art.lsconv_penalty = penalty;
  });
  art.triplet = run_stage("heatmaps", [&] {
    const auto heads = synth_heads(cfg.seed, art.lsconv_activations.shape(), cfg.class_bias, cfg.huber_delta);
    return build_triplet(heads.class_head, heads.bbox_head, art.lsconv_activations, art.scene.target, cfg.lambda,
                         cfg.bbox_grad);
  });
  run_stage("maskpe", [&] {
    auto q = run_query_stage(cfg, art.triplet.h_mixed);
    art.mask_mixed = std::move(q.mask);
    art.pe_mixed = std::move(q.pe);
    art.all_queries = std::move(q.all);
    art.queries = std::move(q.kept);
  });
  run_stage("encoder", [&] {
    auto enc = run_encoder_stage(cfg, art.triplet.h_class, art.triplet.h_bbox);
    art.encoder = std::move(enc.output);
    art.encoder_macs = enc.macs;
  });
  run_stage("decoder", [&] {
    if (!art.queries) return;
    const auto dcfg = cfg.decoder();
    const auto weights = DecoderWeights::random(dcfg, derive_seed(cfg.seed, "decoder"));
    art.decoder = decoder_stack(dcfg, weights, *art.queries, art.encoder.qkv.k, art.encoder.attention.output);
  });
  run_stage("render", [&] {
    const RasterImage photo = image_from_tensor(art.scene.image);
    const std::pair<const char*, const Tensor*> maps[] = {
        {"h_class", &art.triplet.h_class}, {"h_bbox", &art.triplet.h_bbox}, {"h_mixed", &art.triplet.h_mixed}};
    for (const auto& [name, map] : maps) {
      auto r = render_heatmap(*map, cfg.scale, cfg.upscale);
      art.clamped_render_values += r.clamped_values;
      art.renders.emplace_back(name, std::move(r.image));
    }
    // Photo padded with the heatbar so the legend survives blending untouched.
    const RasterImage& mixed = art.renders.back().second;
    RasterImage base = mixed;
    for (std::size_t y = 0; y < photo.height; ++y)
      for (std::size_t x = 0; x < photo.width; ++x) base.set_pixel(x, y, photo.pixel(x, y));
    art.renders.emplace_back("overlay_mixed", overlay(base, mixed, cfg.alpha));
    art.renders.emplace_back("scene", photo);
  });
  return art;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::vector<ManifestEntry> write_pipeline(const PipelineArtifacts& art, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<ManifestEntry> entries;
  auto put = [&](const std::string& rel, const std::vector<std::uint8_t>& bytes) {
    const fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    write_file_bytes(p, bytes);
    entries.push_back({rel, sha256_hex(bytes)});
  };
  auto put_tensor = [&](const std::string& rel, const Tensor& t) { put(rel, encode_hmpt(t)); };
  auto put_text = [&](const std::string& rel, const std::string& s) { put(rel, text_bytes(s)); };

  run_stage("write", [&] {
    fs::create_directories(dir);
    put_text("config.txt", format_key_values(config_to_key_values(art.config)));

    put_tensor("00_scene/activations.hmpt", art.scene.activations);
    put_tensor("00_scene/image.hmpt", art.scene.image);
    put_text("00_scene/target.txt", format_key_values({{"target", format_target(art.scene.target)}}));

    put_tensor("01_lsconv/activations.hmpt", art.lsconv_activations);
    put_text("01_lsconv/penalty.txt", format_key_values({{"penalty", format_float(art.lsconv_penalty)}}));

    put_tensor("02_heatmaps/h_class.hmpt", art.triplet.h_class);
    put_tensor("02_heatmaps/h_bbox.hmpt", art.triplet.h_bbox);
    put_tensor("02_heatmaps/h_mixed.hmpt", art.triplet.h_mixed);

    put_tensor("03_maskpe/mask_mixed.hmpt", art.mask_mixed.mask);
    put_tensor("03_maskpe/pe_mixed.hmpt", art.pe_mixed.pe);
    put_tensor("03_maskpe/mask_class.hmpt", art.encoder.mask_class.mask);
    put_tensor("03_maskpe/mask_bbox.hmpt", art.encoder.mask_bbox.mask);

    put_tensor("04_encoder/Q_enc.hmpt", art.encoder.qkv.q);
    put_tensor("04_encoder/K_enc.hmpt", art.encoder.qkv.k);
    put_tensor("04_encoder/attention.hmpt", art.encoder.attention.weights);
    put_tensor("04_encoder/V_enc.hmpt", art.encoder.attention.output);
    put_text("04_encoder/cost.txt", format_key_values({{"encoder_macs", std::to_string(art.encoder_macs)}}));

    std::ostringstream qinfo;
    if (art.queries) {
      put_tensor("05_decoder/queries.hmpt", art.queries->queries);
      put_tensor("05_decoder/scores.hmpt", art.queries->scores);
      qinfo << "kept=" << art.queries->size() << "\ncells=";
      for (std::size_t i = 0; i < art.queries->cells.size(); ++i) qinfo << (i ? "," : "") << art.queries->cells[i];
      qinfo << "\n";
      for (std::size_t l = 0; l < art.decoder.layer_outputs.size(); ++l)
        put_tensor("05_decoder/layer_" + std::to_string(l + 1) + ".hmpt", art.decoder.layer_outputs[l]);
      put_text("05_decoder/cost_report.txt", art.decoder.cost_report());
    } else {
      qinfo << "kept=0\n";
    }
    put_text("05_decoder/queries.txt", qinfo.str());

    for (const auto& [name, img] : art.renders) put("06_render/" + name + ".ppm", encode_ppm(img));

    write_text_file(dir / "manifest.txt", format_manifest(entries));
  });
  return entries;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.sha256 + "  " + e.path + "\n";
  return out;
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("cannot open " + (dir / "manifest.txt").string());
  std::vector<std::string> bad;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw FormatError("manifest: malformed line '" + line + "'");
    const std::string hash = line.substr(0, sep);
    const std::string rel = line.substr(sep + 2);
    std::error_code ec;
    if (!std::filesystem::exists(dir / rel, ec) || sha256_hex(read_file_bytes(dir / rel)) != hash) bad.push_back(rel);
  }
  return bad;
}

}  // namespace hmpe
