// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx_tools/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparx/analysis/analysis.hpp"
#include "sparx/backbone/model.hpp"
#include "sparx/common/error.hpp"
#include "sparx/ndtensor/tensor_io.hpp"
#include "sparx_tools/checks.hpp"

#ifndef SPARX_VERSION
#define SPARX_VERSION "0.0.0"
#endif

namespace sparx::tools {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  check<ConfigError>(static_cast<bool>(is), "cannot open '", p.string(), "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// Collects artifacts of one run, then writes manifest.json beside them.
class Run {
 public:
  Run(std::string command, std::vector<std::string> args, fs::path dir)
      : command_(std::move(command)), args_(std::move(args)), dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& bytes) {
    fs::path p = dir_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    check<FormatError>(static_cast<bool>(os), "cannot write '", p.string(), "'");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    check<FormatError>(static_cast<bool>(os), "write failed for '", p.string(), "'");
    artifacts_[name] = {{"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
  }

  void finish(std::uint64_t seed, ordered_json extra = ordered_json::object()) {
    ordered_json m;
    m["command"] = command_;
    m["args"] = args_;
    m["seed"] = seed;
    m["version"] = {{"sparx", SPARX_VERSION}, {"format", 1}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    m["artifacts"] = artifacts_;
    m["created_at"] = utc_now();
    std::ofstream os(dir_ / "manifest.json", std::ios::binary);
    os << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  fs::path dir_;
  ordered_json artifacts_ = ordered_json::object();
};

struct ModelArgs {
  std::string variant = "tiny-reduced";
  std::string config;
  std::uint64_t seed = 0;
  std::size_t input = 0;
  std::string mixer, mode, dmca_mode, dtype;

  void add(CLI::App* app, bool with_seed = true) {
    app->add_option("--variant", variant, "Named variant: tiny, small, base, tiny-reduced");
    app->add_option("--config", config, "JSON model-config file (overrides --variant)");
    if (with_seed) app->add_option("--seed", seed, "RNG seed");
    app->add_option("--input", input, "Input side length (multiple of 32)");
    app->add_option("--mixer", mixer, "Token mixer: ss2d, ssm, bissm, window_attn");
    app->add_option("--mode", mode, "Connectivity: sparx, dgc, dsn, plain");
    app->add_option("--dmca-mode", dmca_mode, "DMCA variant: full, concat, no_cgca, no_sr, no_skip");
    app->add_option("--dtype", dtype, "f32 or f64");
  }

  model::ModelConfig resolve() const {
    model::ModelConfig c = config.empty() ? model::variant(variant) : model::config_from_json(read_file(config));
    if (input) c.input_size = input;
    if (!mixer.empty()) c.mixer_kind = blocks::parse_mixer(mixer);
    if (!mode.empty()) c.connectivity = topo::parse_mode(mode);
    if (!dmca_mode.empty()) c.dmca_mode = dmca::parse_mode(dmca_mode);
    if (!dtype.empty()) {
      check<ConfigError>(dtype == "f32" || dtype == "f64", "--dtype must be f32 or f64, got '", dtype, "'");
      c.dtype = dtype == "f32" ? DType::F32 : DType::F64;
    }
    model::validate(c);
    return c;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

Tensor random_image(std::size_t side, std::uint64_t seed, std::size_t index, DType dtype) {
  Rng rng = Rng(seed).split("inputs").split(index);
  Tensor t({3, side, side}, DType::F64);
  for (auto& v : t.data()) v = rng.normal();
  return t.to(dtype);
}

std::string layer_label(const model::LayerCapture& l) {
  return "s" + std::to_string(l.stage) + ".l" + std::to_string(l.index);
}

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Stacks per-sample captures of one layer into (n, ...).
Tensor stack(const std::vector<Tensor>& parts) {
  Shape s = parts.at(0).shape();
  s.insert(s.begin(), parts.size());
  Tensor out(s, parts[0].dtype());
  std::size_t k = 0;
  for (const auto& p : parts)
    for (double v : p.data()) out[k++] = v;
  return out;
}

struct Captured {
  std::vector<model::LayerCapture> meta;
  std::vector<Tensor> outputs, mixer_outputs;  // stacked over samples
};

Captured capture_layers(const model::ModelConfig& cfg, std::uint64_t seed, std::size_t samples) {
  auto p = model::build(cfg, seed);
  std::vector<std::vector<Tensor>> outs, mixes;
  Captured c;
  for (std::size_t i = 0; i < samples; ++i) {
    Tensor img = random_image(cfg.input_size, seed, i, cfg.dtype);
    model::ForwardOptions o;
    o.capture = true;
    auto res = model::forward(p, nullptr, Var::borrow(img), o);
    if (i == 0) {
      c.meta = res.layers;
      outs.resize(res.layers.size());
      mixes.resize(res.layers.size());
    }
    for (std::size_t l = 0; l < res.layers.size(); ++l) {
      outs[l].push_back(res.layers[l].output.value());
      mixes[l].push_back(res.layers[l].mixer_output.value());
    }
  }
  for (std::size_t l = 0; l < outs.size(); ++l) {
    c.outputs.push_back(stack(outs[l]));
    c.mixer_outputs.push_back(stack(mixes[l]));
  }
  return c;
}

analysis::FeatureMatrix as_rows(const Tensor& t) {
  check<ConfigError>(t.rank() >= 2, "layer dump must have a leading sample axis, got ", to_string(t.shape()));
  return analysis::center(t.to(DType::F64).reshaped({t.dim(0), t.numel() / t.dim(0)}));
}

// -- commands -------------------------------------------------------------------

struct PlanArgs {
  std::size_t layers = 0, stride = 2, window = 3;
  bool cross = false;
  std::string ganglia;
  ModelArgs model;
};

int cmd_plan(const PlanArgs& a, Run& run, std::ostream& out) {
  check<ConfigError>(!(a.cross && !a.model.mode.empty() && topo::parse_mode(a.model.mode) == topo::ConnectivityMode::Plain),
                     "--cross-stage: plain connectivity has no ganglion layer to receive the cross-stage feature");
  if (a.layers == 0) {
    check<ConfigError>(a.ganglia.empty(), "--ganglia applies to a single stage; give --layers");
    auto cfg = a.model.resolve();
    auto plans = model::plan_model(cfg);
    ordered_json j = ordered_json::array();
    for (std::size_t s = 0; s < plans.size(); ++s) {
      auto stage_json = ordered_json::parse(topo::to_json(plans[s]));
      stage_json["stage"] = s + 1;
      j.push_back(stage_json);
      run.write("stage" + std::to_string(s + 1) + ".dot", topo::to_dot(plans[s], "stage" + std::to_string(s + 1)));
      out << "stage " << s + 1 << ": " << plans[s].size() << " layers, ganglia {";
      auto g = plans[s].ganglion_indices();
      for (std::size_t i = 0; i < g.size(); ++i) out << (i ? "," : "") << g[i];
      out << "}\n";
    }
    run.write("plan.json", j.dump(2) + "\n");
    run.finish(a.model.seed, {{"variant", cfg.variant_name}});
    return kExitOk;
  }
  topo::StageTopologyConfig cfg{a.layers, a.stride, a.window, topo::parse_mode(a.model.mode.empty() ? "sparx" : a.model.mode),
                                 std::nullopt, a.cross};
  if (!a.ganglia.empty()) {
    std::vector<std::size_t> g;
    for (const auto& s : split_list(a.ganglia)) {
      try {
        g.push_back(std::stoul(s));
      } catch (const std::exception&) {
        fail<ConfigError>("--ganglia: '", s, "' is not an index");
      }
    }
    cfg.ganglion_override = g;
  }
  auto plan = topo::plan_stage(cfg);
  run.write("plan.json", topo::to_json(plan));
  run.write("plan.dot", topo::to_dot(plan));
  auto g = plan.ganglion_indices();
  out << a.layers << " layers, ganglia {";
  for (std::size_t i = 0; i < g.size(); ++i) out << (i ? "," : "") << g[i];
  out << "}\n";
  run.finish(0);
  return kExitOk;
}

int cmd_stats(const ModelArgs& m, const std::string& variants, const std::string& modes, Run& run,
              std::ostream& out) {
  auto vs = variants.empty() ? std::vector<std::string>{m.variant} : split_list(variants);
  auto ms = split_list(modes);
  std::string csv = "variant,mode,input,params,macs,inference_peak_bytes,training_bytes\n";
  std::ostringstream txt;
  txt << std::left << std::setw(14) << "variant" << std::setw(7) << "mode" << std::setw(6) << "input" << std::right
      << std::setw(12) << "params(M)" << std::setw(12) << "GMACs" << std::setw(14) << "peak(MiB)" << std::setw(14)
      << "train(MiB)" << "\n";
  for (const auto& v : vs) {
    ModelArgs one = m;
    one.variant = v;
    for (const auto& mode_name : ms) {
      one.mode = mode_name;
      auto cfg = one.resolve();
      std::size_t input = cfg.input_size;
      auto params = model::count_params(cfg);
      auto macs = model::count_flops(cfg, input).total();
      auto mem = model::memory_report(cfg, input, cfg.connectivity);
      csv += cfg.variant_name + "," + topo::to_string(cfg.connectivity) + "," + std::to_string(input) + "," +
             std::to_string(params) + "," + std::to_string(macs) + "," + std::to_string(mem.inference_peak_bytes) +
             "," + std::to_string(mem.training_bytes) + "\n";
      txt << std::left << std::setw(14) << cfg.variant_name << std::setw(7) << topo::to_string(cfg.connectivity)
          << std::setw(6) << input << std::right << std::fixed << std::setprecision(3) << std::setw(12)
          << params / 1e6 << std::setw(12) << macs / 1e9 << std::setw(14) << mem.inference_peak_bytes / 1048576.0
          << std::setw(14) << mem.training_bytes / 1048576.0 << "\n";
    }
  }
  run.write("stats.csv", csv);
  run.write("stats.txt", txt.str());
  out << txt.str();
  run.finish(m.seed);
  return kExitOk;
}

int cmd_verify(const VerifyOptions& o, Run& run, std::ostream& out) {
  auto results = run_verify(o);
  std::size_t failed = 0;
  for (const auto& r : results) {
    failed += !r.passed;
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured=" << r.measured << " " << r.relation << " "
        << r.tolerance;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << "\n";
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  run.write("verify.json", verify_report_json(results));
  run.finish(o.seed, {{"sabotage", o.sabotage}});
  return failed ? kExitRuntime : kExitOk;
}

int cmd_forward(const ModelArgs& m, const std::string& image_path, Run& run, std::ostream& out) {
  auto cfg = m.resolve();
  auto p = model::build(cfg, m.seed);
  Tensor img = image_path.empty() ? random_image(cfg.input_size, m.seed, 0, cfg.dtype)
                                  : load_tensor(image_path).to(cfg.dtype);
  check<ConfigError>(img.rank() == 3 && img.dim(0) == 3, "input image must be (3,H,W), got ", to_string(img.shape()));
  auto res = model::forward(p, nullptr, Var::borrow(img));
  const Tensor& logits = res.logits.value();
  run.write("logits.spxt", encode_tensor(logits));
  std::string txt;
  for (double v : logits.data()) txt += fixed6(v) + "\n";
  run.write("logits.txt", txt);
  auto d = logits.data();
  out << "logits " << to_string(logits.shape()) << ", argmax " << (std::max_element(d.begin(), d.end()) - d.begin())
      << "\n";
  run.finish(m.seed, {{"config", ordered_json::parse(model::config_to_json(cfg))}});
  return kExitOk;
}

int cmd_capture(const ModelArgs& m, std::size_t samples, const std::string& what, Run& run, std::ostream& out) {
  check<ConfigError>(samples >= 1, "--samples must be >= 1");
  check<ConfigError>(what == "output" || what == "mixer" || what == "both", "--what must be output, mixer or both");
  auto cfg = m.resolve();
  auto cap = capture_layers(cfg, m.seed, samples);
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < cap.meta.size(); ++l) {
    const auto& meta = cap.meta[l];
    for (int kind = 0; kind < 2; ++kind) {
      bool mixer = kind == 1;
      if ((mixer && what == "output") || (!mixer && what == "mixer")) continue;
      const Tensor& t = mixer ? cap.mixer_outputs[l] : cap.outputs[l];
      std::string file = "layers/" + layer_label(meta) + (mixer ? ".mixer" : ".out") + ".spxt";
      run.write(file, encode_tensor(t));
      ordered_json e;
      e["label"] = layer_label(meta);
      e["stage"] = meta.stage;
      e["index"] = meta.index;
      e["role"] = topo::to_string(meta.role);
      e["kind"] = mixer ? "mixer" : "output";
      e["shape"] = t.shape();
      e["file"] = file;
      layers.push_back(std::move(e));
    }
  }
  out << "captured " << cap.meta.size() << " layers x " << samples << " samples\n";
  run.finish(m.seed, {{"samples", samples}, {"layers", layers}});
  return kExitOk;
}

int cmd_cka(const ModelArgs& m, const std::string& dump_dir, std::size_t samples, Run& run, std::ostream& out) {
  std::vector<analysis::FeatureMatrix> feats;
  std::vector<std::string> labels;
  if (!dump_dir.empty()) {
    fs::path dir(dump_dir);
    check<ConfigError>(fs::is_directory(dir), "--dump-dir '", dump_dir, "' is not a directory");
    if (fs::exists(dir / "manifest.json")) {
      auto man = ordered_json::parse(read_file(dir / "manifest.json"));
      check<ConfigError>(man.contains("layers"), "manifest in '", dump_dir, "' lists no layers");
      std::string kind = "mixer";
      bool any_mixer = false;
      for (const auto& e : man["layers"]) any_mixer = any_mixer || e.value("kind", "") == "mixer";
      if (!any_mixer) kind = "output";
      for (const auto& e : man["layers"]) {
        if (e.value("kind", kind) != kind) continue;
        feats.push_back(as_rows(load_tensor(dir / e.at("file").get<std::string>())));
        labels.push_back(e.at("label").get<std::string>());
      }
    } else {
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(dir))
        if (f.path().extension() == ".spxt") files.push_back(f.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        feats.push_back(as_rows(load_tensor(f)));
        labels.push_back(f.stem().string());
      }
    }
    check<ConfigError>(!feats.empty(), "no layer dumps found in '", dump_dir, "'");
  } else {
    check<ConfigError>(samples >= 2, "--samples must be >= 2 for CKA");
    auto cfg = m.resolve();
    auto cap = capture_layers(cfg, m.seed, samples);
    for (std::size_t l = 0; l < cap.meta.size(); ++l) {
      feats.push_back(as_rows(cap.mixer_outputs[l]));
      labels.push_back(layer_label(cap.meta[l]));
    }
  }
  Tensor mat = analysis::cka_matrix(feats);
  run.write("cka.csv", analysis::matrix_csv(mat, labels));
  run.write("cka.spxt", encode_tensor(mat));
  out << "cka over " << labels.size() << " layers, " << feats[0].rows() << " samples\n";
  run.finish(m.seed, {{"labels", labels}});
  return kExitOk;
}

int cmd_erf(const ModelArgs& m, std::size_t stage, std::size_t images, Run& run, std::ostream& out) {
  check<ConfigError>(images >= 1, "--images must be >= 1");
  auto cfg = m.resolve();
  cfg.dtype = DType::F64;
  auto p = model::build(cfg, m.seed);
  std::vector<Tensor> imgs;
  for (std::size_t i = 0; i < images; ++i) imgs.push_back(random_image(cfg.input_size, m.seed, i, DType::F64));
  auto e = analysis::erf(p, stage, imgs);
  run.write("erf.spxt", encode_tensor(e.map));
  run.write("erf.pgm", analysis::to_pgm(e.map));
  auto [eh, ew] = e.support_extent();
  out << "stage " << stage << " erf: support " << e.support() << " cells, extent " << eh << "x" << ew << ", argmax ("
      << e.argmax_y << "," << e.argmax_x << ")\n";
  run.finish(m.seed, {{"stage", stage}, {"images", images}, {"support", e.support()}});
  return kExitOk;
}

int cmd_train_toy(const ModelArgs& m, model::TrainConfig tc, Run& run, std::ostream& out) {
  auto cfg = m.resolve();
  cfg.dtype = DType::F64;
  cfg.input_size = tc.image_size;
  model::validate(cfg);
  tc.seed = m.seed;
  auto p = model::build(cfg, m.seed);
  auto data = model::make_toy_dataset(tc.samples, tc.image_size, m.seed);
  auto res = model::train_toy(p, data, tc);
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < res.losses.size(); ++i) csv += std::to_string(i + 1) + "," + fixed6(res.losses[i]) + "\n";
  run.write("losses.csv", csv);
  ordered_json j;
  j["steps"] = res.steps_run;
  j["final_loss"] = res.losses.empty() ? 0.0 : res.losses.back();
  j["final_accuracy"] = res.final_accuracy;
  run.write("train.json", j.dump(2) + "\n");
  out << "steps " << res.steps_run << ", final loss " << fixed6(res.losses.empty() ? 0.0 : res.losses.back())
      << ", train accuracy " << fixed6(res.final_accuracy) << "\n";
  run.finish(m.seed);
  return kExitOk;
}

int cmd_bench(const ModelArgs& m, std::size_t reps, Run& run, std::ostream& out) {
  check<ConfigError>(reps >= 1, "--reps must be >= 1");
  auto cfg = m.resolve();
  auto p = model::build(cfg, m.seed);
  Tensor img = random_image(cfg.input_size, m.seed, 0, cfg.dtype);
  std::vector<double> secs;
  for (std::size_t r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    model::forward(p, nullptr, Var::borrow(img));
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(secs.begin(), secs.end());
  double median = secs[secs.size() / 2];
  double macs = static_cast<double>(model::count_flops(cfg, cfg.input_size).total());
  ordered_json j;
  j["variant"] = cfg.variant_name;
  j["input"] = cfg.input_size;
  j["reps"] = reps;
  j["median_seconds"] = median;
  j["gmacs_per_second"] = macs / 1e9 / median;
  run.write("bench.json", j.dump(2) + "\n");
  out << cfg.variant_name << " @" << cfg.input_size << ": median " << median << " s over " << reps << " runs ("
      << macs / 1e9 / median << " GMAC/s)\n";
  run.finish(m.seed);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sparx: sparse cross-layer connectivity backbones"};
  app.require_subcommand(1);
  std::string out_dir;
  app.add_option("--out", out_dir, "Output directory (default $SPARX_OUT or ./sparx_out)");

  PlanArgs plan;
  auto* c_plan = app.add_subcommand("plan", "Connection plan of one stage or of a whole variant (JSON + DOT)");
  c_plan->add_option("--layers", plan.layers, "Layers in a single stage (omit to plan a variant)");
  c_plan->add_option("--stride", plan.stride, "Stride S");
  c_plan->add_option("--window", plan.window, "Window M");
  c_plan->add_flag("--cross-stage", plan.cross, "Stage receives a cross-stage feature");
  c_plan->add_option("--ganglia", plan.ganglia, "Explicit ganglion indices, comma separated");
  plan.model.add(c_plan);

  ModelArgs stats_m;
  std::string stats_variants, stats_modes = "sparx";
  auto* c_stats = app.add_subcommand("stats", "Parameters, MACs and modeled feature memory (CSV + text)");
  stats_m.add(c_stats);
  c_stats->add_option("--variants", stats_variants, "Comma-separated variants (default --variant)");
  c_stats->add_option("--modes", stats_modes, "Comma-separated connectivity modes");

  VerifyOptions verify;
  auto* c_verify = app.add_subcommand("verify", "Run the invariant suite and write a JSON report");
  c_verify->add_option("--seed", verify.seed, "RNG seed");
  c_verify->add_option("--sabotage", verify.sabotage, "Inject a fault: softmax")
      ->check(CLI::IsMember({"", "softmax"}));

  ModelArgs fwd_m;
  std::string image_path;
  auto* c_forward = app.add_subcommand("forward", "Logits of one image");
  fwd_m.add(c_forward);
  c_forward->add_option("--image", image_path, "Input tensor file (3,H,W); default a seeded random image");

  ModelArgs cap_m;
  std::size_t cap_samples = 1;
  std::string cap_what = "both";
  auto* c_capture = app.add_subcommand("capture", "Dump per-layer outputs and token-mixer outputs");
  cap_m.add(c_capture);
  c_capture->add_option("--samples", cap_samples, "Random inputs stacked along a leading axis");
  c_capture->add_option("--what", cap_what, "output, mixer or both");

  ModelArgs cka_m;
  std::string dump_dir;
  std::size_t cka_samples = 16;
  auto* c_cka = app.add_subcommand("cka", "Linear CKA matrix across layers");
  cka_m.add(c_cka);
  c_cka->add_option("--dump-dir", dump_dir, "Directory of layer dumps (a capture run or bare .spxt files)");
  c_cka->add_option("--samples", cka_samples, "Inputs captured when no dump is given");

  ModelArgs erf_m;
  std::size_t erf_stage = 4, erf_images = 2;
  auto* c_erf = app.add_subcommand("erf", "Effective receptive field of a stage output (f64)");
  erf_m.add(c_erf);
  c_erf->add_option("--stage", erf_stage, "Probe stage 1..4");
  c_erf->add_option("--images", erf_images, "Random images averaged");

  ModelArgs train_m;
  model::TrainConfig tc;
  auto* c_train = app.add_subcommand("train-toy", "SGD on the synthetic left/right-bright task (f64)");
  train_m.add(c_train);
  c_train->add_option("--steps", tc.steps, "SGD steps");
  c_train->add_option("--lr", tc.lr, "Learning rate");
  c_train->add_option("--batch", tc.batch, "Mini-batch size");
  c_train->add_option("--samples", tc.samples, "Dataset size");
  c_train->add_option("--image-size", tc.image_size, "Image side length");

  ModelArgs bench_m;
  std::size_t reps = 3;
  auto* c_bench = app.add_subcommand("bench", "Time forward passes");
  bench_m.add(c_bench);
  c_bench->add_option("--reps", reps, "Repetitions");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) err << sub->help();
    return kExitConfig;
  }

  if (out_dir.empty()) {
    const char* env = std::getenv("SPARX_OUT");
    out_dir = env && *env ? env : "sparx_out";
  }
  auto* sub = app.get_subcommands().front();
  try {
    Run run(sub->get_name(), args, out_dir);
    if (sub == c_plan) return cmd_plan(plan, run, out);
    if (sub == c_stats) return cmd_stats(stats_m, stats_variants, stats_modes, run, out);
    if (sub == c_verify) return cmd_verify(verify, run, out);
    if (sub == c_forward) return cmd_forward(fwd_m, image_path, run, out);
    if (sub == c_capture) return cmd_capture(cap_m, cap_samples, cap_what, run, out);
    if (sub == c_cka) return cmd_cka(cka_m, dump_dir, cka_samples, run, out);
    if (sub == c_erf) return cmd_erf(erf_m, erf_stage, erf_images, run, out);
    if (sub == c_train) return cmd_train_toy(train_m, tc, run, out);
    if (sub == c_bench) return cmd_bench(bench_m, reps, run, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace sparx::tools
