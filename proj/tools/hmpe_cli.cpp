#include <algorithm>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "hmpe/gradcheck.hpp"
#include "hmpe/hmpt_io.hpp"
#include "hmpe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hmpe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerify = 2;

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config file, then HMPE_SEED, then explicit flags.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  CLI::Option* no_unit_shift = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    for (const auto& [key, def] : config_to_key_values(PipelineConfig{})) {
      std::string names = "--" + key;
      if (key.find('_') != std::string::npos) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      if (key == "lsconv_axis") names += ",--axis";
      options[key] = app->add_option(names, values[key], "config key '" + key + "' (default " + def + ")");
    }
    options["target"] = app->add_option("--target", values["target"], "target box cx,cy,w,h");
    no_unit_shift = app->add_flag("--no-unit-shift", "drop the +-1 constants from the snake paths");
  }

  PipelineConfig resolve() const {
    KeyValues kv;
    if (!config_path.empty()) kv = read_key_values(config_path);
    if (const char* env = std::getenv("HMPE_SEED"); env && *env) kv["seed"] = env;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) kv[key] = values.at(key);
    if (no_unit_shift->count() > 0) kv["unit_shift"] = "0";
    return apply_key_values(PipelineConfig{}, kv);
  }
};

void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

void put_text(const fs::path& p, const std::string& s) { write_text_file(p, s); }

int cmd_synth(const ConfigFlags& flags, const fs::path& out) {
  const auto cfg = flags.resolve();
  const auto scene = synth(cfg.seed, cfg.height, cfg.width, cfg.channels, cfg.scale, cfg.resolved_target());
  ensure_dir(out);
  write_hmpt(out / "activations.hmpt", scene.activations);
  write_hmpt(out / "image.hmpt", scene.image);
  write_ppm(out / "image.ppm", image_from_tensor(scene.image));
  const auto& t = scene.target;
  put_text(out / "target.txt", format_key_values({{"target", format_float(t.cx) + "," + format_float(t.cy) + "," +
                                                                 format_float(t.w) + "," + format_float(t.h)}}));
  std::cout << "synth: " << shape_to_string(scene.activations.shape()) << " -> " << out.string() << "\n";
  return kExitOk;
}

void write_parent(const fs::path& p) {
  if (p.has_parent_path()) ensure_dir(p.parent_path());
}

int cmd_lsconv(const ConfigFlags& flags, const fs::path& input, const fs::path& out, const std::string& penalty_out) {
  const auto cfg = flags.resolve();
  const Tensor feature = read_hmpt(input);
  if (feature.rank() != 2 && feature.rank() != 3)
    throw ShapeError("lsconv: feature must be (H,W) or (K,H,W), got " + shape_to_string(feature.shape()));
  const Tensor stack = feature.rank() == 2 ? feature.reshaped({1, feature.dim(0), feature.dim(1)}) : feature;
  const Axis axis = cfg.lsconv_axis == "y" ? Axis::Y : Axis::X;
  auto [result, penalty] = lsconv_channels(stack, cfg.lsconv_params(), cfg.lsconv_axis == "xy", axis);
  write_parent(out);
  write_hmpt(out, feature.rank() == 2 ? result.reshaped(feature.shape()) : result);
  if (!penalty_out.empty()) {
    write_parent(penalty_out);
    put_text(penalty_out, format_key_values({{"penalty", format_float(penalty)}}));
  }
  std::cout << "lsconv: axis=" << cfg.lsconv_axis << " penalty=" << format_float(penalty) << "\n";
  return kExitOk;
}

int cmd_gen_heatmap(const ConfigFlags& flags, const fs::path& input, const std::string& class_path,
                    const std::string& bbox_path, const fs::path& out) {
  const auto cfg = flags.resolve();
  const Tensor a = read_hmpt(input);
  auto heads = synth_heads(cfg.seed, a.shape(), cfg.class_bias, cfg.huber_delta);
  if (!class_path.empty()) heads.class_head = load_class_head(class_path);
  if (!bbox_path.empty()) heads.bbox_head = load_bbox_head(bbox_path);
  const auto triplet =
      build_triplet(heads.class_head, heads.bbox_head, a, cfg.resolved_target(), cfg.lambda, cfg.bbox_grad);
  ensure_dir(out);
  write_hmpt(out / "h_class.hmpt", triplet.h_class);
  write_hmpt(out / "h_bbox.hmpt", triplet.h_bbox);
  write_hmpt(out / "h_mixed.hmpt", triplet.h_mixed);
  std::cout << "gen-heatmap: lambda=" << format_float(cfg.lambda) << " -> " << out.string() << "\n";
  return kExitOk;
}

int cmd_mask_pe(const ConfigFlags& flags, const fs::path& heat_path, const fs::path& out, const std::string& mask_out) {
  const auto cfg = flags.resolve();
  const Tensor heat = normalize_heatmap(read_hmpt(heat_path));
  const auto mask = mask_from_heatmap(heat, cfg.tau);
  const auto pe = sinusoidal_pe(heat.dim(0), heat.dim(1), cfg.depth);
  const auto parts = classify_regions(heat, cfg.tau);
  write_parent(out);
  write_hmpt(out, masked_pe(pe, mask).pe);
  if (!mask_out.empty()) {
    write_parent(mask_out);
    write_hmpt(mask_out, mask.mask);
  }
  std::cout << "mask-pe: tau=" << format_float(cfg.tau) << " hot=" << parts.hot.size()
            << " cold=" << parts.cold.size() << "\n";
  return kExitOk;
}

int cmd_encode(const ConfigFlags& flags, const fs::path& class_heat, const fs::path& bbox_heat, const fs::path& out) {
  const auto cfg = flags.resolve();
  const auto stage = run_encoder_stage(cfg, read_hmpt(class_heat), read_hmpt(bbox_heat));
  ensure_dir(out);
  write_hmpt(out / "Q_enc.hmpt", stage.output.qkv.q);
  write_hmpt(out / "K_enc.hmpt", stage.output.qkv.k);
  write_hmpt(out / "V_enc.hmpt", stage.output.attention.output);
  write_hmpt(out / "attention.hmpt", stage.output.attention.weights);
  put_text(out / "cost.txt", format_key_values({{"encoder_macs", std::to_string(stage.macs)}}));
  std::cout << "encode: tokens=" << stage.output.qkv.k.dim(0) << " macs=" << stage.macs << "\n";
  return kExitOk;
}

int cmd_decode(const ConfigFlags& flags, const fs::path& heat, const fs::path& enc, const fs::path& out) {
  const auto cfg = flags.resolve();
  const auto qs = run_query_stage(cfg, read_hmpt(heat));
  if (!qs.kept) throw std::runtime_error("decode: no hot queries above tau=" + format_float(cfg.tau));
  const auto dcfg = cfg.decoder();
  const auto weights = DecoderWeights::random(dcfg, derive_seed(cfg.seed, "decoder"));
  const auto res = decoder_stack(dcfg, weights, *qs.kept, read_hmpt(enc / "K_enc.hmpt"), read_hmpt(enc / "V_enc.hmpt"));
  ensure_dir(out);
  write_hmpt(out / "queries.hmpt", qs.kept->queries);
  for (std::size_t l = 0; l < res.layer_outputs.size(); ++l)
    write_hmpt(out / ("layer_" + std::to_string(l + 1) + ".hmpt"), res.layer_outputs[l]);
  put_text(out / "cost_report.txt", res.cost_report());
  std::cout << "decode: queries=" << qs.kept->size() << "\n" << res.cost_report();
  return kExitOk;
}

int cmd_render(const ConfigFlags& flags, const fs::path& heat, const std::string& base_path, const fs::path& out) {
  const auto cfg = flags.resolve();
  auto r = render_heatmap(read_hmpt(heat), cfg.scale, cfg.upscale);
  if (r.clamped_values > 0)
    std::cerr << "warning: " << r.clamped_values << " heat values outside [0,1] were clamped\n";
  RasterImage img = r.image;
  if (!base_path.empty()) {
    const RasterImage photo = read_ppm(base_path);
    const std::size_t body = img.width - kHeatbarWidth;
    if ((photo.width != body && photo.width != img.width) || photo.height != img.height)
      throw std::invalid_argument("render: base image is " + std::to_string(photo.width) + "x" +
                                  std::to_string(photo.height) + ", expected " + std::to_string(body) + "x" +
                                  std::to_string(img.height));
    RasterImage base = img;
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < body; ++x) base.set_pixel(x, y, photo.pixel(x, y));
    img = overlay(base, r.image, cfg.alpha);
  }
  write_parent(out);
  write_ppm(out, img);
  std::cout << "render: " << img.width << "x" << img.height << "\n";
  return kExitOk;
}

int cmd_run_pipeline(const ConfigFlags& flags, const fs::path& out) {
  const auto cfg = flags.resolve();
  const auto art = compute_pipeline(cfg);
  const auto entries = write_pipeline(art, out);
  const auto bad = verify_manifest(out);
  std::cout << "run-pipeline: " << entries.size() << " files -> " << out.string() << "\n";
  std::cout << "queries kept: " << (art.queries ? art.queries->size() : 0) << "\n";
  if (art.queries) std::cout << art.decoder.cost_report();
  if (art.clamped_render_values > 0)
    std::cerr << "warning: " << art.clamped_render_values << " heat values outside [0,1] were clamped\n";
  if (!bad.empty()) throw VerificationFailure("manifest mismatch for " + bad.front());
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, const std::string& dump) {
  const auto report = gradcheck(seed, trials);
  std::cout << report.format();
  if (report.passed()) return kExitOk;
  for (const auto& row : report.rows) {
    if (row.passed()) continue;
    std::cerr << "gradcheck: " << row.head << " order " << row.order << " exceeded tolerance on trial "
              << row.worst_trial << "\n";
    const fs::path dir = fs::path(dump) / (row.head + "_order" + std::to_string(row.order));
    dump_instance(gradcheck_instance(seed, row.worst_trial), dir);
    std::cerr << "  instance dumped to " << dir.string() << "\n";
  }
  return kExitVerify;
}

int cmd_ablate(const ConfigFlags& flags, std::size_t from, std::size_t to, const std::string& out) {
  if (from > to) throw std::invalid_argument("ablate-decoder: --layers-from must not exceed --layers-to");
  const auto cfg = flags.resolve();
  const auto art = compute_pipeline(cfg);
  if (!art.queries) throw std::runtime_error("ablate-decoder: no hot queries above tau=" + format_float(cfg.tau));
  const auto rows = ablate_decoder(cfg.decoder(), derive_seed(cfg.seed, "decoder"), *art.queries,
                                   art.encoder.qkv.k, art.encoder.attention.output, from, to, art.encoder_macs);
  const std::string table = format_ablation(rows);
  std::cout << table;
  if (!out.empty()) {
    write_parent(out);
    write_text_file(out, table);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].decoder_macs != rows[i].closed_form_macs)
      throw VerificationFailure("MAC count differs from closed form at L=" + std::to_string(rows[i].layers));
    if (i > 0 && rows[i].total_macs <= rows[i - 1].total_macs)
      throw VerificationFailure("cumulative cost not increasing at L=" + std::to_string(rows[i].layers));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heatmap position embedding toolkit"};
  app.require_subcommand(1);

  std::deque<ConfigFlags> flag_sets;
  std::map<const CLI::App*, const ConfigFlags*> flags_of;
  auto with_config = [&](CLI::App* cmd) {
    flag_sets.emplace_back().attach(cmd);
    flags_of[cmd] = &flag_sets.back();
  };
  std::string out, input, aux1, aux2;
  std::size_t trials = 100, from = 1, to = DecoderConfig::kMaxLayers;
  std::uint64_t gc_seed = 42;
  std::string dump = "gradcheck_failures";

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
  with_config(synth_cmd);
  synth_cmd->add_option("--out", out, "output directory")->required();

  auto* lsconv_cmd = app.add_subcommand("lsconv", "linear-snake convolution of a feature map or stack");
  with_config(lsconv_cmd);
  lsconv_cmd->add_option("--feature,--activations", input, "(H,W) or (K,H,W) tensor")
      ->required()
      ->check(CLI::ExistingFile);
  lsconv_cmd->add_option("--out", out, "output tensor")->required();
  lsconv_cmd->add_option("--penalty-out", aux1, "continuity penalty text file");

  auto* heat_cmd = app.add_subcommand("gen-heatmap", "class, bbox and mixed heatmaps");
  with_config(heat_cmd);
  heat_cmd->add_option("--activations", input)->required()->check(CLI::ExistingFile);
  heat_cmd->add_option("--class-head", aux1, "class head weights (.hmpt with .txt sidecar)")->check(CLI::ExistingFile);
  heat_cmd->add_option("--bbox-head", aux2, "bbox head weights (.hmpt with .txt sidecar)")->check(CLI::ExistingFile);
  heat_cmd->add_option("--out", out, "output directory")->required();

  auto* mask_cmd = app.add_subcommand("mask-pe", "mask filter and masked positional encoding");
  with_config(mask_cmd);
  mask_cmd->add_option("--heatmap,--heat", input)->required()->check(CLI::ExistingFile);
  mask_cmd->add_option("--out", out, "masked positional encoding (H,W,D)")->required();
  mask_cmd->add_option("--mask-out", aux1, "binary mask (H,W)");

  auto* enc_cmd = app.add_subcommand("encode", "encoder fusion of class and bbox heat");
  with_config(enc_cmd);
  enc_cmd->add_option("--class-heat", input)->required()->check(CLI::ExistingFile);
  enc_cmd->add_option("--bbox-heat", aux1)->required()->check(CLI::ExistingFile);
  enc_cmd->add_option("--out", out, "output directory")->required();

  auto* dec_cmd = app.add_subcommand("decode", "query induction and decoder stack");
  with_config(dec_cmd);
  dec_cmd->add_option("--mixed-heat", input)->required()->check(CLI::ExistingFile);
  dec_cmd->add_option("--enc", aux1, "directory written by encode")->required()->check(CLI::ExistingDirectory);
  dec_cmd->add_option("--out", out, "output directory")->required();

  auto* render_cmd = app.add_subcommand("render", "render a heatmap to PPM with a heatbar");
  with_config(render_cmd);
  render_cmd->add_option("--heatmap,--heat", input)->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--base", aux1, "PPM image to blend under the heatmap")->check(CLI::ExistingFile);
  render_cmd->add_option("--out", out, "output .ppm")->required();

  auto* run_cmd = app.add_subcommand("run-pipeline", "full synthetic pipeline with manifest");
  with_config(run_cmd);
  run_cmd->add_option("--out", out, "artifact directory")->required();

  auto* gc_cmd = app.add_subcommand("gradcheck", "closed-form vs finite-difference partials");
  auto* gc_seed_opt = gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--trials", trials)->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  gc_cmd->add_option("--dump", dump, "directory for failing instances");

  auto* abl_cmd = app.add_subcommand("ablate-decoder", "decoder depth sweep with MAC accounting");
  with_config(abl_cmd);
  abl_cmd->add_option("--layers-from", from)->check(CLI::Range(std::size_t{1}, DecoderConfig::kMaxLayers));
  abl_cmd->add_option("--layers-to", to)->check(CLI::Range(std::size_t{1}, DecoderConfig::kMaxLayers));
  abl_cmd->add_option("--out", out, "write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*synth_cmd) return cmd_synth(*flags_of[synth_cmd], out);
    if (*lsconv_cmd) return cmd_lsconv(*flags_of[lsconv_cmd], input, out, aux1);
    if (*heat_cmd) return cmd_gen_heatmap(*flags_of[heat_cmd], input, aux1, aux2, out);
    if (*mask_cmd) return cmd_mask_pe(*flags_of[mask_cmd], input, out, aux1);
    if (*enc_cmd) return cmd_encode(*flags_of[enc_cmd], input, aux1, out);
    if (*dec_cmd) return cmd_decode(*flags_of[dec_cmd], input, aux1, out);
    if (*render_cmd) return cmd_render(*flags_of[render_cmd], input, aux1, out);
    if (*run_cmd) return cmd_run_pipeline(*flags_of[run_cmd], out);
    if (*gc_cmd) {
      if (const char* env = std::getenv("HMPE_SEED"); env && *env && gc_seed_opt->count() == 0)
        gc_seed = std::stoull(env);
      return cmd_gradcheck(gc_seed, trials, dump);
    }
    if (*abl_cmd) return cmd_ablate(*flags_of[abl_cmd], from, to, out);
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
