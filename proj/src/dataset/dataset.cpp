#include "sketchforge/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "sketchforge/core/codec.hpp"
#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/hash.hpp"
#include "sketchforge/core/logging.hpp"

namespace fs = std::filesystem;

namespace sf {

std::string to_string(Mode m) {
  switch (m) {
  case Mode::sketch2photo: return "sketch2photo";
  case Mode::sketch_strokes: return "sketch_strokes";
  case Mode::colorization: return "colorization";
  }
  return "?";
}

Mode parse_mode(const std::string &s) {
  for (auto m : {Mode::sketch2photo, Mode::sketch_strokes, Mode::colorization})
    if (to_string(m) == s)
      return m;
  throw ConfigError("unknown mode '" + s + "' (expected sketch2photo, sketch_strokes or "
                    "colorization)");
}

int input_channels(Mode m) { return m == Mode::colorization ? 4 : 3; }

// ---------------------------------------------------------------------------

std::vector<ManifestRecord> Manifest::split(const std::string &name) const {
  std::vector<ManifestRecord> out;
  for (const auto &r : records)
    if (r.split == name)
      out.push_back(r);
  return out;
}

void Manifest::validate(bool check_paths) const {
  std::set<std::string> seen, dups;
  for (const auto &r : records) {
    if (r.id.empty())
      throw ValidationError("manifest record with empty id");
    if (!seen.insert(r.id).second)
      dups.insert(r.id);
    if (r.split != "train" && r.split != "val")
      throw ValidationError(fmt::format("record {}: split '{}' is not train or val", r.id, r.split));
    if (check_paths) {
      if (!fs::exists(r.photo_path))
        throw ValidationError(fmt::format("record {}: missing photo {}", r.id, r.photo_path.string()));
      if (r.external_sketch_path && !fs::exists(*r.external_sketch_path))
        throw ValidationError(fmt::format("record {}: missing sketch {}", r.id,
                                          r.external_sketch_path->string()));
    }
  }
  if (!dups.empty()) {
    std::string list;
    for (const auto &d : dups)
      list += (list.empty() ? "" : ", ") + d;
    throw ValidationError("duplicate record ids: " + list);
  }
}

namespace {

std::string relative_to(const fs::path &p, const fs::path &base) {
  std::error_code ec;
  auto rel = fs::relative(p, base, ec);
  if (ec || rel.empty() || rel.native().starts_with(".."))
    return fs::absolute(p).string();
  return rel.string();
}

} // namespace

void Manifest::write_jsonl(const fs::path &path) const {
  const fs::path base = fs::absolute(path).parent_path();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out)
      throw IoError("cannot write " + tmp.string());
    nlohmann::json header = {
        {"manifest", {{"category", to_string(category)}, {"seed", seed}, {"version", 1}}}};
    out << header.dump() << '\n';
    for (const auto &r : records) {
      nlohmann::json j = {{"id", r.id}, {"photo", relative_to(r.photo_path, base)}, {"split", r.split}};
      if (r.external_sketch_path)
        j["sketch"] = relative_to(*r.external_sketch_path, base);
      out << j.dump() << '\n';
    }
  }
  fs::rename(tmp, path);
}

Manifest Manifest::read_jsonl(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot read manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  auto resolve = [&](const std::string &p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  Manifest m;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.contains("manifest")) {
        const auto &h = j["manifest"];
        m.category = parse_category(h.at("category").get<std::string>());
        m.seed = h.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.photo_path = resolve(j.at("photo").get<std::string>());
      if (j.contains("sketch"))
        r.external_sketch_path = resolve(j["sketch"].get<std::string>());
      r.split = j.value("split", std::string("train"));
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception &e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  if (!have_header)
    throw ValidationError(path.string() + ": missing manifest header line");
  m.validate();
  return m;
}

Manifest build_manifest(const fs::path &root_dir, Category category, double val_fraction,
                        std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0))
    throw ParameterError(fmt::format("val_fraction {} outside [0, 1]", val_fraction));
  if (!fs::is_directory(root_dir))
    throw IoError("not a directory: " + root_dir.string());

  auto is_image = [](const fs::path &p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
  };
  auto list = [&](const fs::path &dir) {
    std::vector<fs::path> out;
    if (fs::is_directory(dir))
      for (const auto &e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image(e.path()))
          out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  };

  Manifest m;
  m.category = category;
  m.seed = seed;
  std::map<std::string, int> counts;
  std::vector<ManifestRecord> unsplit;
  auto add = [&](const fs::path &p, const std::string &split) {
    ManifestRecord r;
    r.id = p.stem().string();
    r.photo_path = fs::absolute(p);
    r.split = split;
    const fs::path sk = root_dir / "sketches" / (r.id + ".png");
    if (fs::exists(sk))
      r.external_sketch_path = fs::absolute(sk);
    ++counts[r.id];
    (split.empty() ? unsplit : m.records).push_back(std::move(r));
  };
  for (const auto &p : list(root_dir))
    add(p, "");
  for (const auto &p : list(root_dir / "train"))
    add(p, "train");
  for (const auto &p : list(root_dir / "val"))
    add(p, "val");

  if (m.records.empty() && unsplit.empty())
    throw ValidationError("no images found under " + root_dir.string());
  std::string dups;
  for (const auto &[id, n] : counts)
    if (n > 1)
      dups += (dups.empty() ? "" : ", ") + id;
  if (!dups.empty())
    throw ValidationError("duplicate image ids: " + dups);

  std::vector<std::pair<std::uint64_t, std::size_t>> rank;
  for (std::size_t i = 0; i < unsplit.size(); ++i)
    rank.emplace_back(derive_seed(seed, unsplit[i].id), i);
  std::sort(rank.begin(), rank.end());
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * unsplit.size()));
  for (std::size_t k = 0; k < rank.size(); ++k)
    unsplit[rank[k].second].split = k < n_val ? "val" : "train";
  m.records.insert(m.records.end(), unsplit.begin(), unsplit.end());
  std::sort(m.records.begin(), m.records.end(),
            [](const auto &a, const auto &b) { return a.id < b.id; });
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

SketchStyle StyleMix::draw(Rng &rng) const {
  validate();
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (int i = 0; i < 4; ++i) {
    if (u < weights[i])
      return static_cast<SketchStyle>(i);
    u -= weights[i];
  }
  for (int i = 3; i >= 0; --i)
    if (weights[i] > 0)
      return static_cast<SketchStyle>(i);
  return SketchStyle::xdog_default;
}

void StyleMix::validate() const {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ParameterError("style mix weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0))
    throw ParameterError("style mix needs at least one positive weight");
}

nlohmann::json PairParams::to_json() const {
  return {{"category", to_string(category)},
          {"sketch", sketch.to_json()},
          {"style_mix", styles.weights},
          {"strokes", strokes.to_json()},
          {"brightness", brightness},
          {"cutoff", cutoff},
          {"external_rotation_deg", external_rotation_deg}};
}

PairParams PairParams::from_json(const nlohmann::json &j) {
  PairParams p;
  if (j.contains("category"))
    p.category = parse_category(j["category"].get<std::string>());
  if (j.contains("sketch"))
    p.sketch = SketchParams::from_json(j["sketch"]);
  if (j.contains("style_mix"))
    p.styles.weights = j["style_mix"].get<std::array<double, 4>>();
  if (j.contains("strokes"))
    p.strokes = StrokeSamplerParams::from_json(j["strokes"]);
  p.brightness = j.value("brightness", p.brightness);
  p.cutoff = j.value("cutoff", p.cutoff);
  p.external_rotation_deg = j.value("external_rotation_deg", p.external_rotation_deg);
  p.styles.validate();
  return p;
}

namespace {

ImageBuffer as_rgb(const ImageBuffer &img) {
  ImageBuffer u = to_unit(img);
  if (u.channels() == 3)
    return u;
  if (u.channels() == 1)
    return replicate_channels(u, 3);
  throw ShapeError("photo must have 1 or 3 channels, got " + img.describe());
}

ImageBuffer as_gray(const ImageBuffer &img) {
  ImageBuffer u = to_unit(img);
  return u.channels() == 1 ? u : luma(u);
}

} // namespace

TrainingPair make_training_pair(const ImageBuffer &photo, const ImageBuffer *external_sketch,
                                const std::string &id, Mode mode, const PairParams &params,
                                std::uint64_t seed) {
  params.sketch.validate();
  Rng rng(seed);
  TrainingPair out;
  out.mode = mode;
  out.provenance.record_id = id;
  out.provenance.seed = seed;

  const int s = resize_target(params.category);
  ImageBuffer resized = resize_bilinear(as_rgb(photo), s, s);

  if (mode == Mode::colorization) {
    out.provenance.style = "none";
    AugmentedPair crop_pair = resize_and_random_crop(resized, luma(resized), params.category, rng);
    out.target = std::move(crop_pair.target_photo);
    out.provenance.crop_origin = crop_pair.crop_origin;
    out.strokes = sample_color_strokes(out.target, params.strokes, rng);
    out.input = compose_colorization_input(crop_pair.input_sketch, out.strokes);
    out.provenance.stroke_count = static_cast<int>(out.strokes.size());
    return out;
  }

  ImageBuffer sketch;
  if (external_sketch) {
    out.provenance.style = "external";
    sketch = resize_bilinear(as_gray(*external_sketch), s, s);
    if (rng.bernoulli(0.5)) {
      resized = flip_horizontal(resized);
      sketch = flip_horizontal(sketch);
    }
    const double deg = rng.uniform(-params.external_rotation_deg, params.external_rotation_deg);
    resized = rotate(resized, deg, 1.0);
    sketch = rotate(sketch, deg, 1.0);
  } else {
    // the drawn style's tau/phi; everything else (and the configured style's
    // own tau/phi) comes from params.sketch
    SketchParams sp = params.sketch;
    sp.style = params.styles.draw(rng);
    if (sp.style != params.sketch.style) {
      const XdogParams preset = SketchParams::preset(sp.style).xdog;
      sp.xdog.tau = preset.tau;
      sp.xdog.phi = preset.phi;
    }
    out.provenance.style = to_string(sp.style);
    sketch = synthesize_sketch(resized, sp);
  }

  AugmentedPair aug = resize_and_random_crop(resized, sketch, params.category, rng);
  out.provenance.crop_origin = aug.crop_origin;
  if (params.brightness) {
    aug.applied_brightness = rng.uniform(params.sketch.brightness_lo, params.sketch.brightness_hi);
    aug.input_sketch = brightness_jitter(aug.input_sketch, aug.applied_brightness);
  }
  if (params.cutoff) {
    CutoffResult c = cutoff_augment_detailed(aug.input_sketch, rng, params.sketch.cutoff);
    aug.input_sketch = std::move(c.image);
    aug.cutoff_strokes_used = static_cast<int>(c.strokes.size());
  }
  out.provenance.brightness = aug.applied_brightness;
  out.provenance.cutoff_strokes = aug.cutoff_strokes_used;
  out.target = std::move(aug.target_photo);
  if (mode == Mode::sketch_strokes)
    out.strokes = sample_color_strokes(out.target, params.strokes, rng);
  out.provenance.stroke_count = static_cast<int>(out.strokes.size());
  out.input = compose_sketch_input(aug.input_sketch, out.strokes);
  return out;
}

TrainingPair make_training_pair(const ManifestRecord &record, Mode mode, const PairParams &params,
                                std::uint64_t seed) {
  const ImageBuffer photo = read_image(record.photo_path);
  std::optional<ImageBuffer> sketch;
  if (record.external_sketch_path && mode != Mode::colorization)
    sketch = read_image(*record.external_sketch_path);
  return make_training_pair(photo, sketch ? &*sketch : nullptr, record.id, mode, params, seed);
}

Batch make_batch(const std::vector<TrainingPair> &pairs) {
  if (pairs.empty())
    throw ValidationError("empty batch");
  std::vector<ImageBuffer> in, tg;
  Batch b;
  for (const auto &p : pairs) {
    in.push_back(to_signed(p.input));
    tg.push_back(to_signed(p.target));
    b.ids.push_back(p.provenance.record_id);
  }
  b.inputs = to_tensor(in);
  b.targets = to_tensor(tg);
  return b;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
  return order;
}

std::uint64_t pair_seed(std::uint64_t seed, int epoch, const std::string &id) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(epoch)), id);
}

// ---------------------------------------------------------------------------

EpochStream::EpochStream(const Manifest &manifest, Mode mode, PairParams params, int batch_size,
                         int epoch, std::size_t prefetch)
    : records_(manifest.split("train")), mode_(mode), params_(std::move(params)),
      batch_size_(batch_size), epoch_(epoch), seed_(manifest.seed),
      capacity_(std::max<std::size_t>(prefetch, 1)) {
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  params_.category = manifest.category;
  n_batches_ = records_.size() / static_cast<std::size_t>(batch_size);
  worker_ = std::thread([this] { run(); });
}

EpochStream::~EpochStream() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void EpochStream::run() {
  try {
    const auto order = epoch_order(records_.size(), seed_, epoch_);
    for (std::size_t b = 0; b < n_batches_; ++b) {
      std::vector<TrainingPair> pairs;
      for (int i = 0; i < batch_size_; ++i) {
        const auto &r = records_[order[b * batch_size_ + i]];
        pairs.push_back(make_training_pair(r, mode_, params_, pair_seed(seed_, epoch_, r.id)));
      }
      Batch batch = make_batch(pairs);
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return stop_ || queue_.size() < capacity_; });
      if (stop_)
        return;
      queue_.push_back(std::move(batch));
      ++produced_;
      cv_.notify_all();
    }
  } catch (...) {
    std::lock_guard lk(mu_);
    error_ = std::current_exception();
    cv_.notify_all();
  }
}

std::optional<Batch> EpochStream::next() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return !queue_.empty() || error_ || consumed_ == n_batches_; });
  if (!queue_.empty()) {
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    ++consumed_;
    cv_.notify_all();
    return b;
  }
  if (error_)
    std::rethrow_exception(error_);
  return std::nullopt;
}

// ---------------------------------------------------------------------------

ImageBuffer procedural_face(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(size, size, 3);
  auto rgb = [&](double lo, double hi) {
    return Rgb{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  };
  const Rgb bg_top = rgb(0.2, 0.9), bg_bottom = rgb(0.1, 0.8);
  const double tone = rng.uniform(0.35, 0.95);
  const Rgb skin{tone, tone * rng.uniform(0.7, 0.85), tone * rng.uniform(0.55, 0.7)};
  const double hair_v = rng.uniform(0.05, 0.6);
  const Rgb hair{hair_v, hair_v * rng.uniform(0.6, 0.9), hair_v * rng.uniform(0.4, 0.8)};
  const Rgb iris = rgb(0.05, 0.5);
  const Rgb lips{rng.uniform(0.55, 0.85), rng.uniform(0.15, 0.35), rng.uniform(0.2, 0.4)};

  const double S = size;
  const double cx = S * rng.uniform(0.46, 0.54), cy = S * rng.uniform(0.5, 0.58);
  const double fw = S * rng.uniform(0.24, 0.3), fh = S * rng.uniform(0.3, 0.36);
  const double eye_dx = fw * rng.uniform(0.38, 0.48), eye_y = cy - fh * rng.uniform(0.1, 0.22);
  const double eye_r = S * rng.uniform(0.03, 0.045);
  const double mouth_y = cy + fh * rng.uniform(0.45, 0.6), mouth_w = fw * rng.uniform(0.35, 0.55);

  auto inside = [](double x, double y, double ex, double ey, double rx, double ry) {
    const double u = (x - ex) / rx, v = (y - ey) / ry;
    return u * u + v * v <= 1.0;
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5, t = py / S;
      Rgb c{bg_top[0] * (1 - t) + bg_bottom[0] * t, bg_top[1] * (1 - t) + bg_bottom[1] * t,
            bg_top[2] * (1 - t) + bg_bottom[2] * t};
      if (inside(px, py, cx, cy - fh * 0.25, fw * 1.18, fh * 1.0))
        c = hair;
      if (py > cy + fh * 0.6 && std::abs(px - cx) < fw * 0.45)
        c = skin; // neck
      if (inside(px, py, cx, cy, fw, fh))
        c = skin;
      for (int side : {-1, 1}) {
        const double ex = cx + side * eye_dx;
        if (inside(px, py, ex, eye_y - eye_r * 1.9, eye_r * 1.5, eye_r * 0.35))
          c = hair;
        if (inside(px, py, ex, eye_y, eye_r * 1.6, eye_r))
          c = {0.95, 0.95, 0.95};
        if (inside(px, py, ex, eye_y, eye_r * 0.7, eye_r * 0.7))
          c = iris;
      }
      if (inside(px, py, cx, cy + fh * 0.18, fw * 0.12, fh * 0.18))
        c = {skin[0] * 0.85, skin[1] * 0.8, skin[2] * 0.8};
      if (inside(px, py, cx, mouth_y, mouth_w, fh * 0.08))
        c = lips;
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = c[ch];
    }
  return gaussian_blur(img, 0.7);
}

void write_procedural_dataset(const fs::path &root, int n, int size, std::uint64_t seed) {
  fs::create_directories(root);
  for (int i = 0; i < n; ++i)
    write_png(root / fmt::format("face_{:04d}.png", i),
              procedural_face(size, derive_seed(seed, static_cast<std::uint64_t>(i))));
}

} // namespace sf
