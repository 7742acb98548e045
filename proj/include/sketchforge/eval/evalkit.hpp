#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/dataset/dataset.hpp"
#include "sketchforge/model/feature_extractor.hpp"
#include "sketchforge/model/generator.hpp"

namespace sf {

/// Anything that maps a signed-range input batch to a signed-range RGB batch.
using ModelFn = std::function<Tensor(const Tensor &inputs)>;

ModelFn generator_model(const Generator &g);

/// Mean Euclidean RGB distance (unit range) between `output` and the stroke
/// colours over the strokes' footprint grown by `dilation` pixels. Later
/// strokes win where footprints overlap. NaN when the set covers nothing.
double stroke_compliance(const ImageBuffer &output, const StrokeSet &strokes, int dilation = 0);

/// Fraction of pixels in a ring around each stroke (outside its footprint,
/// within `reach` pixels) whose colour is within `tolerance` of that
/// stroke's colour; averaged over strokes. Higher = colour spread further.
double color_spread(const ImageBuffer &output, const StrokeSet &strokes, int reach = 8,
                    double tolerance = 0.2);

struct EvalRow {
  std::string id;
  double pixel_mse = 0.0;         ///< signed [-1, 1] units
  double feature_loss = 0.0;
  double stroke_compliance = 0.0; ///< NaN without strokes
  double color_spread = 0.0;      ///< NaN without strokes
  int stroke_count = 0;

  nlohmann::json to_json() const;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  nlohmann::json config;
  std::string config_hash;
  /// Compliance of the whole split at dilation radius 0, 1, 2.
  std::vector<double> compliance_by_dilation;

  /// Means over rows; NaN entries are skipped.
  nlohmann::json aggregates() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
  /// Writes <stem>.json and <stem>.csv.
  void write(const std::filesystem::path &dir, const std::string &stem = "eval") const;
};

struct EvalOptions {
  std::string split = "val";
  PairParams pairs;
  std::uint64_t seed = 0;
  /// Free-form tag identifying the model (e.g. checkpoint path); part of the hash.
  std::string model_tag;
};

/// Builds each record's pair of `split` with pair_seed(seed, 0, id), runs the
/// model and scores the output against the target.
EvalReport eval_reconstruction(const ModelFn &model, const Manifest &manifest, Mode mode,
                               const FeatureExtractor &fx, const EvalOptions &options);

/// Same scoring on pairs already in memory.
EvalReport eval_pairs(const ModelFn &model, const std::vector<TrainingPair> &pairs,
                      const FeatureExtractor &fx, nlohmann::json config);

/// Mean of the per-image stroke_compliance over pairs that carry strokes.
double eval_stroke_compliance(const ModelFn &model, const std::vector<TrainingPair> &pairs,
                              int dilation = 0);

/// Mean pairwise per-pixel RGB distance between the outputs for one sketch
/// under each stroke variation. 0 when fewer than two variations.
double eval_diversity(const ModelFn &model, const ImageBuffer &sketch, Mode mode,
                      const std::vector<StrokeSet> &variations);

/// Mean per-pixel Euclidean RGB distance of two same-size unit images.
double mean_rgb_distance(const ImageBuffer &a, const ImageBuffer &b);

} // namespace sf
