#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/image.hpp"
#include "sketchforge/sketch/sketch.hpp"
#include "sketchforge/strokes/strokes.hpp"

namespace sf {

enum class Mode { sketch2photo, sketch_strokes, colorization };

std::string to_string(Mode m);
Mode parse_mode(const std::string &s);
/// 3 for the sketch modes, 4 (luma + stroke hints) for colorization.
int input_channels(Mode m);

struct ManifestRecord {
  std::string id;
  std::filesystem::path photo_path;
  std::optional<std::filesystem::path> external_sketch_path;
  std::string split = "train"; ///< "train" or "val"
  bool operator==(const ManifestRecord &) const = default;
};

/// JSONL on disk: a header line {"manifest": {"category", "seed", "version"}}
/// followed by one {"id", "photo", "sketch"?, "split"} object per line.
/// Relative paths are resolved against the manifest's directory.
struct Manifest {
  Category category = Category::face;
  std::uint64_t seed = 0;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(const std::string &name) const;
  /// Unique ids, known splits, existing files. Throws ValidationError.
  void validate(bool check_paths = true) const;
  void write_jsonl(const std::filesystem::path &path) const;
  static Manifest read_jsonl(const std::filesystem::path &path);
};

/// Scans root_dir for *.png / *.jpg / *.jpeg. Images under root/train and
/// root/val keep that split; the rest are split by ranking hash(id, seed),
/// the round(val_fraction * n) smallest going to val. A file
/// root/sketches/<id>.png becomes the record's external sketch.
Manifest build_manifest(const std::filesystem::path &root_dir, Category category,
                        double val_fraction, std::uint64_t seed);

/// Per-record categorical draw over the four sketch styles, in the order
/// xdog_default, xdog_soft, xdog_heavy, dodge.
struct StyleMix {
  std::array<double, 4> weights{1.0, 0.0, 0.0, 0.0};
  SketchStyle draw(Rng &rng) const;
  void validate() const;
  static StyleMix uniform() { return {{1.0, 1.0, 1.0, 1.0}}; }
};

struct PairParams {
  Category category = Category::face;
  SketchParams sketch;
  StyleMix styles;
  StrokeSamplerParams strokes;
  bool brightness = true;
  bool cutoff = true;
  /// External sketches: mirror with probability 0.5, rotate by U[-r, r] degrees.
  double external_rotation_deg = 10.0;

  nlohmann::json to_json() const;
  static PairParams from_json(const nlohmann::json &j);
};

struct PairProvenance {
  std::string record_id;
  std::uint64_t seed = 0;
  std::string style; ///< sketch style, "external" or "none" (colorization)
  int stroke_count = 0;
  CropOrigin crop_origin;
  double brightness = 1.0;
  int cutoff_strokes = 0;
};

struct TrainingPair {
  ImageBuffer input;  ///< unit range, 3 or 4 channels
  ImageBuffer target; ///< unit range RGB
  Mode mode = Mode::sketch2photo;
  StrokeSet strokes;
  PairProvenance provenance;
};

/// Pure function of (photo, sketch, mode, params, seed).
TrainingPair make_training_pair(const ImageBuffer &photo, const ImageBuffer *external_sketch,
                                const std::string &id, Mode mode, const PairParams &params,
                                std::uint64_t seed);
TrainingPair make_training_pair(const ManifestRecord &record, Mode mode, const PairParams &params,
                                std::uint64_t seed);

struct Batch {
  Tensor inputs;  ///< [N, C, H, W] in [-1, 1]
  Tensor targets; ///< [N, 3, H, W] in [-1, 1]
  std::vector<std::string> ids;
  int size() const { return inputs.shape().n; }
};

Batch make_batch(const std::vector<TrainingPair> &pairs);

/// Order in which an epoch visits the train records: Fisher-Yates shuffle
/// seeded by (manifest seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Seed for the pair built from record `id` during `epoch`.
std::uint64_t pair_seed(std::uint64_t seed, int epoch, const std::string &id);

/// Batches of one epoch over the train split, assembled by a background
/// worker into a bounded queue. The last partial batch is dropped.
class EpochStream {
public:
  EpochStream(const Manifest &manifest, Mode mode, PairParams params, int batch_size, int epoch,
              std::size_t prefetch = 2);
  ~EpochStream();
  EpochStream(const EpochStream &) = delete;
  EpochStream &operator=(const EpochStream &) = delete;

  std::size_t batch_count() const { return n_batches_; }
  /// Next batch, or nullopt at the end of the epoch. Rethrows worker errors.
  std::optional<Batch> next();

private:
  void run();

  std::vector<ManifestRecord> records_;
  Mode mode_;
  PairParams params_;
  int batch_size_;
  int epoch_;
  std::uint64_t seed_;
  std::size_t n_batches_;
  std::size_t capacity_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  std::size_t produced_ = 0, consumed_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

/// Synthetic face-like portrait: gradient background, skin ellipse, hair,
/// eyes, brows, nose and mouth with per-seed geometry and palette.
ImageBuffer procedural_face(int size, std::uint64_t seed);

/// Writes n procedural faces as <root>/face_XXXX.png.
void write_procedural_dataset(const std::filesystem::path &root, int n, int size,
                              std::uint64_t seed);

} // namespace sf
