#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/dataset/dataset.hpp"
#include "sketchforge/losses/losses.hpp"
#include "sketchforge/model/checkpoint.hpp"
#include "sketchforge/model/discriminator.hpp"
#include "sketchforge/model/feature_extractor.hpp"
#include "sketchforge/model/generator.hpp"

namespace sf {

enum class Stage { content, adversarial };

std::string to_string(Stage s);
Stage parse_stage(const std::string &s);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed, ordered parameter list. Moments are allocated on the
/// first step.
class Adam {
public:
  Adam() = default;
  Adam(AdamConfig config, double lr) : config_(config), lr_(lr) {}

  void step(const std::vector<nn::Param *> &params);
  long steps() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const AdamConfig &config() const { return config_; }
  void set_config(AdamConfig c) { config_ = c; }

  void store(Archive &a, const std::string &prefix, const std::vector<nn::Param *> &params) const;
  void restore(const Archive &a, const std::string &prefix, const std::vector<nn::Param *> &params,
               long steps);

private:
  AdamConfig config_;
  double lr_ = 1e-4;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct StageConfig {
  Stage stage = Stage::content;
  LossWeights weights;
  int epochs = 3;
  int batch_size = 32;
  double g_learning_rate = 1e-4;
  double d_learning_rate = 1e-5;
  Mode mode = Mode::sketch2photo;
  std::string preset_name = "custom";
  AdamConfig g_adam;
  AdamConfig d_adam{0.5, 0.999, 1e-8};
  /// Multiplies weights.adversarial before use. The presets keep the
  /// nominal weights; this factor maps them onto this code's loss
  /// reductions (see the training notes in docs/).
  double adv_scale = 1e-8;

  LossWeights effective_weights() const;
  /// content => w_adv == 0; batch_size >= 1; epochs >= 0; rates > 0.
  void validate() const;
  nlohmann::json to_json() const;
  static StageConfig from_json(const nlohmann::json &j);
};

StageConfig stage1_preset(Mode mode = Mode::sketch2photo);
/// sketch2photo: (w_p 0, w_f 1, w_tv 0, w_adv 1e8);
/// sketch_strokes / colorization: (w_p 1, w_f 10, w_tv 0, w_adv 1e5).
StageConfig stage2_preset(Mode task);

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  int batch_size = 0;
  LossBreakdown loss;
  double d_loss = std::numeric_limits<double>::quiet_NaN();
  double d_real_mean = std::numeric_limits<double>::quiet_NaN();
  double d_fake_mean = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;

  bool finite() const;
  nlohmann::json to_json() const;
};

/// Everything needed to continue training bit-for-bit.
class TrainState {
public:
  TrainState(GeneratorConfig config, std::shared_ptr<const FeatureExtractor> fx,
             std::uint64_t seed);
  TrainState(Generator generator, std::shared_ptr<const FeatureExtractor> fx, std::uint64_t seed);

  Generator generator;
  std::optional<Discriminator> discriminator;
  std::shared_ptr<const FeatureExtractor> fx;
  Adam g_opt;
  std::optional<Adam> d_opt;
  long step = 0;
  int epoch = 0; ///< completed epochs
  std::uint64_t seed = 0;
  Rng rng;
  std::deque<nlohmann::json> recent; ///< last kRecentMetrics step records
  static constexpr std::size_t kRecentMetrics = 64;

  /// Creates the discriminator and its optimizer if absent.
  void ensure_discriminator(int resolution, const DiscriminatorConfig &config, double lr,
                            const AdamConfig &adam);
  void configure_optimizers(const StageConfig &config);

  Archive to_archive(const CheckpointInfo &info) const;
  void save(const std::filesystem::path &path, const CheckpointInfo &info) const;
  static TrainState load(const std::filesystem::path &path,
                         std::shared_ptr<const FeatureExtractor> fx);
  static TrainState from_archive(const Archive &a, std::shared_ptr<const FeatureExtractor> fx);
};

struct GeneratorPass {
  Tensor output;
  TotalLossResult loss;
  std::vector<double> fake_scores; ///< empty without a discriminator
};

/// Forward + backward of the weighted objective through G. The gradient flows
/// through D when given, but only the generator's Param::grad accumulates.
GeneratorPass generator_objective(Generator &g, const FeatureExtractor &fx, Discriminator *d,
                                  const Batch &batch, const LossWeights &weights);

/// Value only.
LossBreakdown generator_loss(const Generator &g, const FeatureExtractor &fx,
                             const Discriminator *d, const Batch &batch,
                             const LossWeights &weights);

/// One generator update on w_p L_p + w_f L_f + w_tv L_tv. w_adv is forced to 0.
StepMetrics train_step_content(TrainState &state, const Batch &batch, LossWeights weights);

struct DiscriminatorStep {
  double loss;
  double real_mean;
  double fake_mean;
};

/// One optimizer update of D on real vs fake images; touches only D.
/// Reported values are measured before the update.
DiscriminatorStep discriminator_step(Discriminator &d, Adam &opt, const Tensor &real,
                                     const Tensor &fake);

/// One discriminator update on real targets vs G(inputs), then one generator
/// update on the full objective scored by the updated discriminator.
StepMetrics train_step_adversarial(TrainState &state, const Batch &batch,
                                   const LossWeights &weights);

struct RunOptions {
  std::filesystem::path out_dir = "runs/default";
  GeneratorConfig generator = GeneratorConfig::standard();
  DiscriminatorConfig discriminator;
  FeatureExtractorSpec feature_extractor;
  PairParams pairs;
  std::uint64_t seed = 0;
  /// Stage-1 checkpoint to start stage 2 from.
  std::optional<std::filesystem::path> init_checkpoint;
  /// Checkpoint written by a previous run to continue from.
  std::optional<std::filesystem::path> resume;
  /// Stop after this many steps in total (0 = no limit).
  long max_steps = 0;
};

/// Runs the remaining epochs of `config`, appending to <out_dir>/metrics.jsonl
/// and writing <out_dir>/epoch_<n>.skf after every epoch. Returns the last
/// checkpoint written.
std::filesystem::path run_training(const StageConfig &config, const Manifest &manifest,
                                   const RunOptions &options);

/// Appends whole lines to a file; each line is a single write followed by a
/// flush so a killed process leaves only complete records.
class JsonlWriter {
public:
  explicit JsonlWriter(const std::filesystem::path &path);
  ~JsonlWriter();
  JsonlWriter(const JsonlWriter &) = delete;
  JsonlWriter &operator=(const JsonlWriter &) = delete;
  void write(const nlohmann::json &record);

private:
  int fd_ = -1;
};

/// Flat key = value training configuration ('#' starts a comment).
struct TrainConfigFile {
  std::map<std::string, std::string> values;
  static TrainConfigFile parse(const std::string &text);
  static TrainConfigFile load(const std::filesystem::path &path);
  /// Applies the known keys over `config` and `options`; unknown keys are an error.
  void apply(StageConfig &config, RunOptions &options, std::filesystem::path *manifest) const;
};

} // namespace sf
