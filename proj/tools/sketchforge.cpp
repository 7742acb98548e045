// sketchforge: data preparation, training, inference, serving and benchmarks.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>

#include "sketchforge/core/codec.hpp"
#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/logging.hpp"
#include "sketchforge/eval/evalkit.hpp"
#include "sketchforge/service/service.hpp"
#include "sketchforge/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace sf;

namespace {

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      const auto c = line.find(':');
      return c == std::string::npos ? line : line.substr(c + 2);
    }
  return "unknown";
}

nlohmann::json hardware_report() {
  return {{"cpu", cpu_model()},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"device", device_from_env().empty() ? "cpu" : device_from_env()},
          {"simd", Eigen::SimdInstructionSetsInUse()},
          {"compiler", fmt::format("gcc {}.{}", __GNUC__, __GNUC_MINOR__)},
          {"precision", "float64"}};
}

nlohmann::json latency_stats(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto pct = [&](double p) {
    const auto i = static_cast<std::size_t>(std::ceil(p * v.size())) - 1;
    return v[std::min(i, v.size() - 1)];
  };
  return {{"mean", std::accumulate(v.begin(), v.end(), 0.0) / v.size()},
          {"min", v.front()},
          {"p50", pct(0.5)},
          {"p95", pct(0.95)},
          {"max", v.back()}};
}

// -------------------------------------------------------------------------

struct PrepareArgs {
  fs::path root;
  std::string category = "face";
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  fs::path out;
  int procedural = 0;
  int size = 256;
};

int cmd_prepare(const PrepareArgs &a) {
  if (a.procedural > 0) {
    write_procedural_dataset(a.root, a.procedural, a.size, a.seed);
    logger()->info("wrote {} procedural faces to {}", a.procedural, a.root.string());
  }
  const Manifest m = build_manifest(a.root, parse_category(a.category), a.val_fraction, a.seed);
  const fs::path out = a.out.empty() ? a.root / "manifest.jsonl" : a.out;
  m.write_jsonl(out);
  fmt::print("{} records ({} train, {} val) -> {}\n", m.records.size(), m.split("train").size(),
             m.split("val").size(), out.string());
  return 0;
}

struct TrainArgs {
  int stage = 1;
  std::string task = "sketch2photo";
  fs::path manifest;
  fs::path config;
  fs::path out = "runs/default";
  fs::path init;
  fs::path resume;
  long max_steps = 0;
  std::uint64_t seed = 0;
  int epochs = -1;
  int batch_size = -1;
  double g_lr = -1;
  int base_width = -1;
  std::string fx_backbone;
  fs::path fx_weights;
};

int cmd_train(const TrainArgs &a) {
  const Mode mode = parse_mode(a.task);
  StageConfig cfg = a.stage == 1 ? stage1_preset(mode) : stage2_preset(mode);
  RunOptions o;
  o.out_dir = a.out;
  o.seed = a.seed;
  fs::path manifest = a.manifest;
  if (!a.config.empty())
    TrainConfigFile::load(a.config).apply(cfg, o, &manifest);
  // command-line flags win over the config file
  cfg.stage = a.stage == 1 ? Stage::content : Stage::adversarial;
  cfg.mode = mode;
  if (a.epochs >= 0) cfg.epochs = a.epochs;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.g_lr > 0) cfg.g_learning_rate = a.g_lr;
  if (a.max_steps > 0) o.max_steps = a.max_steps;
  if (a.base_width > 0) {
    o.generator.base_width = a.base_width;
    o.generator.param_band.reset();
  }
  if (!a.fx_backbone.empty()) o.feature_extractor.backbone = a.fx_backbone;
  if (!a.fx_weights.empty()) o.feature_extractor.weights = a.fx_weights;
  if (!a.init.empty()) o.init_checkpoint = a.init;
  if (!a.resume.empty()) o.resume = a.resume;
  if (cfg.stage == Stage::content)
    cfg.weights.adversarial = 0.0;
  cfg.validate();
  if (manifest.empty())
    throw ConfigError("train needs --manifest (or 'manifest' in the config file)");
  const Manifest m = Manifest::read_jsonl(manifest);
  logger()->info("training {} ({}) on {} train records", cfg.preset_name, cfg.to_json().dump(),
                 m.split("train").size());
  const fs::path last = run_training(cfg, m, o);
  fmt::print("{}\n", last.string());
  return 0;
}

struct InferArgs {
  fs::path model;
  fs::path input;
  fs::path strokes;
  fs::path output = "out.png";
  int size = 256;
};

int cmd_infer(const InferArgs &a) {
  const LoadedGenerator lg = load_generator(a.model);
  const Mode mode = parse_mode(lg.info.mode);
  std::optional<StrokeSet> strokes;
  if (!a.strokes.empty()) {
    std::ifstream in(a.strokes);
    if (!in)
      throw IoError("cannot read " + a.strokes.string());
    strokes = StrokeSet::from_json(nlohmann::json::parse(in));
  }
  const ImageBuffer input = compose_request_input(mode, read_image(a.input), strokes, a.size);
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor y = lg.generator.forward(to_tensor(to_signed(input)));
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_png(a.output, to_unit(to_image(y, 0, ValueRange::signed_)));
  fmt::print("{} ({}x{}, {} mode, forward {:.1f} ms)\n", a.output.string(), a.size, a.size,
             lg.info.mode, ms);
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path models_dir = "models";
  std::size_t queue = 8;
};

HttpFrontend *g_http = nullptr;

int cmd_serve(const ServeArgs &a) {
  ServiceOptions o;
  o.models_dir = a.models_dir;
  o.queue_capacity = a.queue;
  SynthesisService svc(o);
  svc.start();
  HttpFrontend http(svc);
  g_http = &http;
  std::signal(SIGINT, [](int) {
    if (g_http)
      g_http->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_http)
      g_http->stop();
  });
  if (!http.listen(a.host, a.port)) {
    logger()->error("could not bind {}:{}", a.host, a.port);
    return 1;
  }
  g_http = nullptr;
  return 0;
}

struct BenchArgs {
  int size = 256;
  int runs = 10;
  int warmup = 1;
  fs::path model;
  fs::path report;
};

int cmd_bench(const BenchArgs &a) {
  std::shared_ptr<const Generator> g;
  std::string mode = "sketch2photo", source = "untrained standard generator";
  if (!a.model.empty()) {
    LoadedGenerator lg = load_generator(a.model);
    mode = lg.info.mode;
    source = a.model.string();
    g = std::make_shared<const Generator>(std::move(lg.generator));
  } else {
    g = std::make_shared<const Generator>(build_generator(GeneratorConfig::standard(), 0));
  }
  ServiceOptions o;
  o.models_dir = fs::path();
  o.queue_capacity = 1;
  SynthesisService svc(o);
  ModelInfo info;
  info.mode = mode;
  info.stage = "bench";
  svc.add_model("bench", g, info);

  ImageBuffer sketch(a.size, a.size, 1, ValueRange::unit, 1.0);
  for (int y = a.size / 4; y < 3 * a.size / 4; ++y)
    sketch.at(y, a.size / 2, 0) = 0.0;
  SynthesisRequest req;
  req.mode = parse_mode(mode);
  req.model_id = "bench";
  req.output_size = a.size;
  req.image_png = encode_png(mode == "colorization" ? procedural_face(a.size, 1) : sketch);
  if (req.mode == Mode::colorization)
    req.image_png = encode_png(luma(decode_image(req.image_png)));

  for (int i = 0; i < a.warmup; ++i)
    svc.synthesize(req);
  std::vector<double> fwd, total;
  for (int i = 0; i < a.runs; ++i) {
    const auto r = svc.synthesize(req);
    fwd.push_back(r.latency_ms);
    total.push_back(r.total_ms);
  }
  const nlohmann::json report = {{"size", a.size},
                                 {"runs", a.runs},
                                 {"warmup", a.warmup},
                                 {"model", source},
                                 {"mode", mode},
                                 {"param_count", g->param_count()},
                                 {"latency_ms", latency_stats(fwd)},
                                 {"total_ms", latency_stats(total)},
                                 {"hardware", hardware_report()},
                                 {"reference_ms", 20.0},
                                 {"reference_note",
                                  "20 ms reference figure measured on a GPU; informational only"}};
  fmt::print("{}\n", report.dump(2));
  if (!a.report.empty())
    std::ofstream(a.report) << report.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  fs::path model;
  fs::path manifest;
  std::string split = "val";
  std::uint64_t seed = 0;
  fs::path out = "eval";
};

int cmd_eval(const EvalArgs &a) {
  const LoadedGenerator lg = load_generator(a.model);
  const Manifest m = Manifest::read_jsonl(a.manifest);
  const FeatureExtractor fx = FeatureExtractor::create({});
  EvalOptions o;
  o.split = a.split;
  o.seed = a.seed;
  o.model_tag = a.model.string();
  const EvalReport r =
      eval_reconstruction(generator_model(lg.generator), m, parse_mode(lg.info.mode), fx, o);
  r.write(a.out);
  fmt::print("{}\n", r.aggregates().dump(2));
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"sketchforge: sketch / stroke conditioned image synthesis"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  PrepareArgs prep;
  auto *p = app.add_subcommand("prepare-data", "Scan an image folder and write a JSONL manifest");
  p->add_option("--root", prep.root, "Image folder (train/ and val/ subfolders optional)")
      ->required();
  p->add_option("--category", prep.category, "face | car | bedroom")
      ->check(CLI::IsMember({"face", "car", "bedroom"}));
  p->add_option("--val-fraction", prep.val_fraction, "Share of unsplit images sent to val")
      ->check(CLI::Range(0.0, 1.0));
  p->add_option("--seed", prep.seed, "Split seed");
  p->add_option("--out", prep.out, "Manifest path (default <root>/manifest.jsonl)");
  p->add_option("--procedural", prep.procedural,
                "First write this many synthetic face images into --root");
  p->add_option("--size", prep.size, "Side of procedural images")->check(CLI::Range(32, 1024));

  TrainArgs tr;
  auto *t = app.add_subcommand("train", "Run stage 1 (content) or stage 2 (adversarial) training");
  t->add_option("--stage", tr.stage, "1 = content loss only, 2 = adversarial fine-tuning")
      ->check(CLI::IsMember({1, 2}));
  t->add_option("--task", tr.task, "sketch2photo | sketch_strokes | colorization")
      ->check(CLI::IsMember({"sketch2photo", "sketch_strokes", "colorization"}));
  t->add_option("--manifest", tr.manifest, "Manifest written by prepare-data");
  t->add_option("--config", tr.config, "key = value training config (see docs/training.md)");
  t->add_option("--out", tr.out, "Run directory for checkpoints and metrics.jsonl");
  t->add_option("--init", tr.init, "Stage-1 checkpoint to fine-tune (stage 2)");
  t->add_option("--resume", tr.resume, "Checkpoint of an interrupted run to continue");
  t->add_option("--max-steps", tr.max_steps, "Stop after this many steps in total");
  t->add_option("--seed", tr.seed, "Initialisation seed");
  t->add_option("--epochs", tr.epochs, "Override the preset's epoch count");
  t->add_option("--batch-size", tr.batch_size, "Override the preset's batch size");
  t->add_option("--g-lr", tr.g_lr, "Override the generator learning rate");
  t->add_option("--base-width", tr.base_width, "Generator base width (smaller = faster)");
  t->add_option("--fx-backbone", tr.fx_backbone, "tiny | vgg19");
  t->add_option("--fx-weights", tr.fx_weights, "Weights archive for the vgg19 backbone");

  InferArgs inf;
  auto *i = app.add_subcommand("infer", "Run a checkpoint on one sketch or grayscale image");
  i->add_option("--model", inf.model, "Checkpoint (.skf)")->required();
  i->add_option("--input", inf.input, "Sketch, or grayscale photo for colorization")->required();
  i->add_option("--strokes", inf.strokes, "StrokeSet JSON (canvas pixels of --size)");
  i->add_option("--output", inf.output, "Output PNG");
  i->add_option("--size", inf.size, "Output side; multiple of the model's downscale");

  ServeArgs sv;
  auto *s = app.add_subcommand("serve", "HTTP API: /v1/synthesize, /v1/models, /v1/health");
  s->add_option("--port", sv.port, "TCP port");
  s->add_option("--host", sv.host, "Bind address");
  s->add_option("--models-dir", sv.models_dir, "Folder of .skf checkpoints (id = file stem)");
  s->add_option("--queue", sv.queue, "Pending requests before 503")->check(CLI::PositiveNumber);
  s->footer("Device: SKETCHFORGE_DEVICE (only 'cpu' is available).");

  BenchArgs be;
  auto *b = app.add_subcommand("bench", "Measure synthesis latency and report the hardware");
  b->add_option("--size", be.size, "128 or 256")->check(CLI::IsMember({128, 256}));
  b->add_option("--runs", be.runs, "Timed runs")->check(CLI::PositiveNumber);
  b->add_option("--warmup", be.warmup, "Untimed runs first");
  b->add_option("--model", be.model, "Checkpoint (default: untrained standard generator)");
  b->add_option("--report", be.report, "Also write the JSON report here");

  EvalArgs ev;
  auto *e = app.add_subcommand("eval", "Reconstruction / stroke-compliance report on a split");
  e->add_option("--model", ev.model, "Checkpoint (.skf)")->required();
  e->add_option("--manifest", ev.manifest, "Manifest")->required();
  e->add_option("--split", ev.split, "train | val");
  e->add_option("--seed", ev.seed, "Pair synthesis seed");
  e->add_option("--out", ev.out, "Report folder (eval.json, eval.csv)");

  CLI11_PARSE(app, argc, argv);
  if (verbose)
    logger()->set_level(spdlog::level::debug);

  try {
    if (*p) return cmd_prepare(prep);
    if (*t) return cmd_train(tr);
    if (*i) return cmd_infer(inf);
    if (*s) return cmd_serve(sv);
    if (*b) return cmd_bench(be);
    if (*e) return cmd_eval(ev);
  } catch (const ConfigError &ex) {
    fmt::print(stderr, "config error: {}\n", ex.what());
    return 2;
  } catch (const std::exception &ex) {
    fmt::print(stderr, "error: {}\n", ex.what());
    return 1;
  }
  return 0;
}
