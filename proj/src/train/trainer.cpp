#include "sketchforge/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/logging.hpp"

namespace fs = std::filesystem;

namespace sf {

std::string to_string(Stage s) { return s == Stage::content ? "content" : "adversarial"; }

Stage parse_stage(const std::string &s) {
  if (s == "content" || s == "1")
    return Stage::content;
  if (s == "adversarial" || s == "2")
    return Stage::adversarial;
  throw ConfigError("unknown stage '" + s + "' (expected 1/content or 2/adversarial)");
}

// ---------------------------------------------------------------------------

void Adam::step(const std::vector<nn::Param *> &params) {
  if (m_.empty()) {
    for (const nn::Param *p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size())
    throw ConfigError("optimizer parameter list changed between steps");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Param &p = *params[k];
    double *w = p.value.data();
    const double *g = p.grad.data();
    double *m = m_[k].data(), *v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::store(Archive &a, const std::string &prefix,
                 const std::vector<nn::Param *> &params) const {
  for (std::size_t k = 0; k < m_.size(); ++k) {
    a.tensors[prefix + "m." + params[k]->name] = m_[k];
    a.tensors[prefix + "v." + params[k]->name] = v_[k];
  }
}

void Adam::restore(const Archive &a, const std::string &prefix,
                   const std::vector<nn::Param *> &params, long steps) {
  t_ = steps;
  m_.clear();
  v_.clear();
  if (steps == 0)
    return;
  for (const nn::Param *p : params) {
    m_.push_back(a.tensor(prefix + "m." + p->name));
    v_.push_back(a.tensor(prefix + "v." + p->name));
    if (m_.back().shape() != p->value.shape() || v_.back().shape() != p->value.shape())
      throw CheckpointError("optimizer state shape mismatch for " + p->name);
  }
}

// ---------------------------------------------------------------------------

LossWeights StageConfig::effective_weights() const {
  LossWeights w = weights;
  w.adversarial *= adv_scale;
  return w;
}

void StageConfig::validate() const {
  weights.validate();
  if (stage == Stage::content && weights.adversarial != 0.0)
    throw ConfigError("content stage requires w_adv = 0");
  if (batch_size < 1)
    throw ConfigError(fmt::format("batch_size must be >= 1 (got {})", batch_size));
  if (epochs < 0)
    throw ConfigError("epochs must be >= 0");
  if (!(g_learning_rate > 0.0) || !(d_learning_rate > 0.0))
    throw ConfigError("learning rates must be > 0");
  if (!(adv_scale >= 0.0) || !std::isfinite(adv_scale))
    throw ConfigError("adv_scale must be finite and >= 0");
}

nlohmann::json StageConfig::to_json() const {
  return {{"stage", to_string(stage)},
          {"weights", weights.to_json()},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"g_learning_rate", g_learning_rate},
          {"d_learning_rate", d_learning_rate},
          {"mode", to_string(mode)},
          {"preset_name", preset_name},
          {"g_adam", {g_adam.beta1, g_adam.beta2, g_adam.eps}},
          {"d_adam", {d_adam.beta1, d_adam.beta2, d_adam.eps}},
          {"adv_scale", adv_scale}};
}

StageConfig StageConfig::from_json(const nlohmann::json &j) {
  try {
    StageConfig c;
    c.stage = parse_stage(j.at("stage").get<std::string>());
    c.weights = LossWeights::from_json(j.at("weights"));
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.g_learning_rate = j.at("g_learning_rate").get<double>();
    c.d_learning_rate = j.at("d_learning_rate").get<double>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.preset_name = j.value("preset_name", std::string("custom"));
    if (j.contains("g_adam"))
      c.g_adam = {j["g_adam"][0], j["g_adam"][1], j["g_adam"][2]};
    if (j.contains("d_adam"))
      c.d_adam = {j["d_adam"][0], j["d_adam"][1], j["d_adam"][2]};
    c.adv_scale = j.value("adv_scale", c.adv_scale);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("stage config: ") + e.what());
  }
}

StageConfig stage1_preset(Mode mode) {
  StageConfig c;
  c.stage = Stage::content;
  c.weights = {1.0, 1.0, 0.0, 1e-5};
  c.epochs = 3;
  c.batch_size = 32;
  c.g_learning_rate = 1e-4;
  c.mode = mode;
  c.preset_name = "stage1";
  return c;
}

StageConfig stage2_preset(Mode task) {
  StageConfig c;
  c.stage = Stage::adversarial;
  c.mode = task;
  c.epochs = 3;
  c.batch_size = 32;
  c.g_learning_rate = 1e-5;
  c.d_learning_rate = 1e-5;
  c.g_adam = {0.5, 0.999, 1e-8};
  if (task == Mode::sketch2photo) {
    c.weights = {0.0, 1.0, 1e8, 0.0};
    c.preset_name = "stage2_sketch2photo";
  } else {
    c.weights = {1.0, 10.0, 1e5, 0.0};
    c.preset_name = task == Mode::colorization ? "stage2_colorization" : "stage2_sketch_strokes";
  }
  return c;
}

bool StepMetrics::finite() const {
  if (!loss.finite())
    return false;
  if (!std::isnan(d_real_mean) || !std::isnan(d_fake_mean) || !std::isnan(d_loss))
    return std::isfinite(d_loss) && std::isfinite(d_real_mean) && std::isfinite(d_fake_mean);
  return true;
}

nlohmann::json StepMetrics::to_json() const {
  auto num = [](double v) -> nlohmann::json {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
  };
  return {{"step", step},
          {"epoch", epoch},
          {"batch_size", batch_size},
          {"loss", loss.to_json()},
          {"d_loss", num(d_loss)},
          {"d_real_mean", num(d_real_mean)},
          {"d_fake_mean", num(d_fake_mean)},
          {"wall_ms", wall_ms}};
}

// ---------------------------------------------------------------------------

TrainState::TrainState(GeneratorConfig config, std::shared_ptr<const FeatureExtractor> f,
                       std::uint64_t s)
    : TrainState(build_generator(config, derive_seed(s, "generator")), std::move(f), s) {}

TrainState::TrainState(Generator g, std::shared_ptr<const FeatureExtractor> f, std::uint64_t s)
    : generator(std::move(g)), fx(std::move(f)), seed(s), rng(derive_seed(s, "trainer")) {
  if (!fx)
    throw ConfigError("train state needs a feature extractor");
}

void TrainState::ensure_discriminator(int resolution, const DiscriminatorConfig &config, double lr,
                                      const AdamConfig &adam) {
  if (!discriminator)
    discriminator.emplace(config, resolution, derive_seed(seed, "discriminator"));
  if (!d_opt)
    d_opt.emplace(adam, lr);
}

void TrainState::configure_optimizers(const StageConfig &config) {
  // moments survive a resume; hyper-parameters always come from the stage config
  g_opt.set_config(config.g_adam);
  g_opt.set_lr(config.g_learning_rate);
  if (d_opt) {
    d_opt->set_config(config.d_adam);
    d_opt->set_lr(config.d_learning_rate);
  }
}

Archive TrainState::to_archive(const CheckpointInfo &info) const {
  CheckpointInfo full = info;
  full.rng_state = rng.state();
  full.init_seed = derive_seed(seed, "generator");
  Archive a = generator_archive(generator, full);
  auto &g = const_cast<Generator &>(generator);
  a.meta["train"] = {{"step", step},
                     {"epoch", epoch},
                     {"seed", seed},
                     {"g_adam_steps", g_opt.steps()},
                     {"g_lr", g_opt.lr()},
                     {"recent", nlohmann::json(std::vector<nlohmann::json>(recent.begin(), recent.end()))}};
  g_opt.store(a, "adam.g.", g.parameters());
  if (discriminator) {
    auto &d = const_cast<Discriminator &>(*discriminator);
    a.meta["train"]["discriminator"] = {{"config", d.config().to_json()},
                                        {"resolution", d.input_resolution()},
                                        {"d_adam_steps", d_opt ? d_opt->steps() : 0},
                                        {"d_lr", d_opt ? d_opt->lr() : 0.0}};
    store_params(a, "discriminator.", discriminator->parameters());
    if (d_opt)
      d_opt->store(a, "adam.d.", d.parameters());
  }
  return a;
}

void TrainState::save(const fs::path &path, const CheckpointInfo &info) const {
  to_archive(info).save(path);
}

TrainState TrainState::from_archive(const Archive &a, std::shared_ptr<const FeatureExtractor> f) {
  LoadedGenerator lg = generator_from_archive(a);
  const auto tr = a.meta.value("train", nlohmann::json::object());
  TrainState st(std::move(lg.generator), std::move(f), tr.value("seed", std::uint64_t{0}));
  try {
    st.step = tr.value("step", 0L);
    st.epoch = tr.value("epoch", 0);
    if (!lg.info.rng_state.empty())
      st.rng.restore(lg.info.rng_state);
    // optimizer hyper-parameters are re-applied by configure_optimizers
    st.g_opt.restore(a, "adam.g.", st.generator.parameters(), tr.value("g_adam_steps", 0L));
    st.g_opt.set_lr(tr.value("g_lr", 1e-4));
    for (const auto &r : tr.value("recent", nlohmann::json::array()))
      st.recent.push_back(r);
    if (tr.contains("discriminator")) {
      const auto &dj = tr["discriminator"];
      st.discriminator.emplace(DiscriminatorConfig::from_json(dj.at("config")),
                               dj.at("resolution").get<int>());
      restore_params(a, "discriminator.", st.discriminator->parameters());
      st.d_opt.emplace();
      st.d_opt->restore(a, "adam.d.", st.discriminator->parameters(),
                        dj.value("d_adam_steps", 0L));
      st.d_opt->set_lr(dj.value("d_lr", 1e-5));
    }
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("train state: ") + e.what());
  }
  return st;
}

TrainState TrainState::load(const fs::path &path, std::shared_ptr<const FeatureExtractor> f) {
  return from_archive(Archive::load(path), std::move(f));
}

// ---------------------------------------------------------------------------

GeneratorPass generator_objective(Generator &g, const FeatureExtractor &fx, Discriminator *d,
                                  const Batch &batch, const LossWeights &weights) {
  GeneratorPass out;
  nn::Cache cache;
  out.output = g.forward(batch.inputs, cache);
  std::optional<Discriminator::Pass> dpass;
  if (d) {
    dpass = d->forward(out.output);
    out.fake_scores = dpass->scores;
  }
  out.loss = total_loss_with_grad(out.output, batch.targets, out.fake_scores, weights, fx);
  Tensor dy = out.loss.grad_pred;
  if (d && weights.adversarial > 0.0)
    dy.add_scaled(d->backward(*dpass, out.loss.grad_scores, false));
  g.backward(cache, dy);
  return out;
}

LossBreakdown generator_loss(const Generator &g, const FeatureExtractor &fx,
                             const Discriminator *d, const Batch &batch,
                             const LossWeights &weights) {
  const Tensor y = g.forward(batch.inputs);
  std::vector<double> scores;
  if (d)
    scores = d->score(y);
  return total_loss(y, batch.targets, scores, weights, fx);
}

namespace {

double mean(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v)
    s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

void record(TrainState &state, StepMetrics &m, std::chrono::steady_clock::time_point t0) {
  m.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  m.step = ++state.step;
  m.epoch = state.epoch;
  state.recent.push_back(m.to_json());
  while (state.recent.size() > TrainState::kRecentMetrics)
    state.recent.pop_front();
}

} // namespace

StepMetrics train_step_content(TrainState &state, const Batch &batch, LossWeights weights) {
  const auto t0 = std::chrono::steady_clock::now();
  weights.adversarial = 0.0;
  auto params = state.generator.parameters();
  nn::zero_grads(params);
  GeneratorPass pass = generator_objective(state.generator, *state.fx, nullptr, batch, weights);
  StepMetrics m;
  m.batch_size = batch.size();
  m.loss = pass.loss.breakdown;
  if (!m.loss.finite())
    throw DomainError(fmt::format("non-finite loss at step {}: {}", state.step + 1,
                                  m.loss.to_json().dump()));
  state.g_opt.step(params);
  record(state, m, t0);
  return m;
}

DiscriminatorStep discriminator_step(Discriminator &d, Adam &opt, const Tensor &real,
                                     const Tensor &fake) {
  auto params = d.parameters();
  nn::zero_grads(params);
  const auto real_pass = d.forward(real);
  const auto fake_pass = d.forward(fake);
  DiscriminatorStep out{discriminator_loss(real_pass.scores, fake_pass.scores),
                        mean(real_pass.scores), mean(fake_pass.scores)};
  const auto g = discriminator_loss_grad(real_pass.scores, fake_pass.scores);
  d.backward(real_pass, g.d_real, true);
  d.backward(fake_pass, g.d_fake, true);
  opt.step(params);
  return out;
}

StepMetrics train_step_adversarial(TrainState &state, const Batch &batch,
                                   const LossWeights &weights) {
  if (!state.discriminator || !state.d_opt)
    throw ConfigError("adversarial step needs a discriminator (call ensure_discriminator)");
  const auto t0 = std::chrono::steady_clock::now();
  Discriminator &d = *state.discriminator;
  StepMetrics m;
  m.batch_size = batch.size();

  // D sees only images, never the conditioning input
  const DiscriminatorStep ds =
      discriminator_step(d, *state.d_opt, batch.targets, state.generator.forward(batch.inputs));
  m.d_loss = ds.loss;
  m.d_real_mean = ds.real_mean;
  m.d_fake_mean = ds.fake_mean;

  // generator update against the updated discriminator
  auto g_params = state.generator.parameters();
  nn::zero_grads(g_params);
  GeneratorPass pass = generator_objective(state.generator, *state.fx, &d, batch, weights);
  m.loss = pass.loss.breakdown;
  if (!m.finite())
    throw DomainError(fmt::format("non-finite metrics at step {}: {}", state.step + 1,
                                  m.to_json().dump()));
  state.g_opt.step(g_params);
  record(state, m, t0);
  return m;
}

// ---------------------------------------------------------------------------

JsonlWriter::JsonlWriter(const fs::path &path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0)
    throw IoError("cannot open " + path.string() + " for append");
}

JsonlWriter::~JsonlWriter() {
  if (fd_ >= 0)
    ::close(fd_);
}

void JsonlWriter::write(const nlohmann::json &record) {
  const std::string line = record.dump() + "\n";
  const char *p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0)
      throw IoError("metrics write failed");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  ::fdatasync(fd_);
}

fs::path run_training(const StageConfig &config, const Manifest &manifest,
                      const RunOptions &options) {
  config.validate();
  fs::create_directories(options.out_dir);
  auto fx = std::make_shared<const FeatureExtractor>(
      FeatureExtractor::create(options.feature_extractor));

  std::optional<TrainState> state;
  if (options.resume) {
    state.emplace(TrainState::load(*options.resume, fx));
    logger()->info("resuming from {} (epoch {}, step {})", options.resume->string(), state->epoch,
                   state->step);
  } else if (config.stage == Stage::adversarial) {
    if (!options.init_checkpoint)
      throw ConfigError("stage 2 needs a stage-1 checkpoint (init_checkpoint)");
    LoadedGenerator lg = load_generator(*options.init_checkpoint);
    if (lg.info.stage != "content")
      throw ConfigError(fmt::format("{} is a '{}' checkpoint; stage 2 starts from a content-stage "
                                    "checkpoint",
                                    options.init_checkpoint->string(), lg.info.stage));
    state.emplace(std::move(lg.generator), fx, options.seed);
  } else {
    GeneratorConfig gc = options.generator;
    gc.input_channels = input_channels(config.mode);
    state.emplace(gc, fx, options.seed);
  }
  if (state->generator.config().input_channels != input_channels(config.mode))
    throw ConfigError(fmt::format("generator takes {} channels but mode {} needs {}",
                                  state->generator.config().input_channels,
                                  to_string(config.mode), input_channels(config.mode)));
  state->configure_optimizers(config);
  if (config.stage == Stage::adversarial)
    state->ensure_discriminator(kTrainResolution, options.discriminator, config.d_learning_rate,
                                config.d_adam);

  PairParams pairs = options.pairs;
  pairs.category = manifest.category;
  const LossWeights weights = config.effective_weights();
  JsonlWriter metrics(options.out_dir / "metrics.jsonl");
  CheckpointInfo info;
  info.stage = to_string(config.stage);
  info.mode = to_string(config.mode);
  info.extra = {{"stage_config", config.to_json()}, {"category", to_string(manifest.category)}};

  fs::path last = options.resume ? *options.resume : fs::path();
  while (state->epoch < config.epochs) {
    EpochStream stream(manifest, config.mode, pairs, config.batch_size, state->epoch);
    if (stream.batch_count() == 0)
      throw ValidationError(fmt::format("train split has fewer than batch_size={} records",
                                        config.batch_size));
    bool stopped = false;
    while (auto batch = stream.next()) {
      StepMetrics m = config.stage == Stage::content
                          ? train_step_content(*state, *batch, weights)
                          : train_step_adversarial(*state, *batch, weights);
      nlohmann::json j = m.to_json();
      j["stage"] = to_string(config.stage);
      metrics.write(j);
      logger()->info("epoch {} step {} total {:.6g} (p {:.4g} f {:.4g} adv {:.4g} tv {:.4g})",
                     state->epoch, m.step, m.loss.total, m.loss.pixel, m.loss.feature,
                     m.loss.adversarial, m.loss.tv);
      if (options.max_steps > 0 && state->step >= options.max_steps) {
        stopped = true;
        break;
      }
    }
    if (stopped) {
      last = options.out_dir / fmt::format("step_{}.skf", state->step);
      state->save(last, info);
      break;
    }
    ++state->epoch;
    last = options.out_dir / fmt::format("epoch_{}.skf", state->epoch);
    state->save(last, info);
    logger()->info("wrote {}", last.string());
  }
  return last;
}

// ---------------------------------------------------------------------------

TrainConfigFile TrainConfigFile::parse(const std::string &text) {
  TrainConfigFile f;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos)
      line.resize(h);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
    f.values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return f;
}

TrainConfigFile TrainConfigFile::load(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void TrainConfigFile::apply(StageConfig &c, RunOptions &o, fs::path *manifest) const {
  auto num = [](const std::string &k, const std::string &v) {
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size())
        throw std::invalid_argument(v);
      return d;
    } catch (const std::exception &) {
      throw ConfigError(fmt::format("config key {}: '{}' is not a number", k, v));
    }
  };
  // preset first so explicit keys override it
  if (auto it = values.find("preset"); it != values.end()) {
    const Mode mode = values.count("mode") ? parse_mode(values.at("mode")) : c.mode;
    if (it->second == "stage1")
      c = stage1_preset(mode);
    else if (it->second == "stage2")
      c = stage2_preset(mode);
    else
      throw ConfigError("unknown preset '" + it->second + "' (stage1 or stage2)");
  }
  for (const auto &[k, v] : values) {
    if (k == "preset") continue;
    else if (k == "stage") c.stage = parse_stage(v);
    else if (k == "mode") c.mode = parse_mode(v);
    else if (k == "epochs") c.epochs = static_cast<int>(num(k, v));
    else if (k == "batch_size") c.batch_size = static_cast<int>(num(k, v));
    else if (k == "g_lr") c.g_learning_rate = num(k, v);
    else if (k == "d_lr") c.d_learning_rate = num(k, v);
    else if (k == "w_p") c.weights.pixel = num(k, v);
    else if (k == "w_f") c.weights.feature = num(k, v);
    else if (k == "w_adv") c.weights.adversarial = num(k, v);
    else if (k == "w_tv") c.weights.tv = num(k, v);
    else if (k == "adv_scale") c.adv_scale = num(k, v);
    else if (k == "seed") o.seed = static_cast<std::uint64_t>(num(k, v));
    else if (k == "max_steps") o.max_steps = static_cast<long>(num(k, v));
    else if (k == "out_dir") o.out_dir = v;
    else if (k == "init_checkpoint") o.init_checkpoint = fs::path(v);
    else if (k == "resume") o.resume = fs::path(v);
    else if (k == "base_width") o.generator.base_width = static_cast<int>(num(k, v));
    else if (k == "n_bottleneck_res") o.generator.n_bottleneck_res = static_cast<int>(num(k, v));
    else if (k == "n_down") o.generator.n_down = o.generator.n_up = static_cast<int>(num(k, v));
    else if (k == "param_band") {
      if (v == "none") o.generator.param_band.reset();
      else throw ConfigError("param_band only accepts 'none'");
    }
    else if (k == "fx_backbone") o.feature_extractor.backbone = v;
    else if (k == "fx_weights") o.feature_extractor.weights = v;
    else if (k == "fx_tap") o.feature_extractor.tap = v;
    else if (k == "d_base_width") o.discriminator.base_width = static_cast<int>(num(k, v));
    else if (k == "d_layers") o.discriminator.n_layers = static_cast<int>(num(k, v));
    else if (k == "style_mix") {
      std::istringstream ss(v);
      std::string part;
      for (int i = 0; i < 4; ++i) {
        if (!std::getline(ss, part, ','))
          throw ConfigError("style_mix needs four comma-separated weights");
        o.pairs.styles.weights[i] = num(k, part);
      }
      o.pairs.styles.validate();
    }
    else if (k == "manifest") {
      if (manifest) *manifest = v;
    }
    else
      throw ConfigError("unknown config key '" + k + "'");
  }
  c.validate();
}

} // namespace sf
