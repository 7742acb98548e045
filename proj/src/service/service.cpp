#include "sketchforge/service/service.hpp"

#include <chrono>
#include <cstdlib>

#include <fmt/format.h>

#include "sketchforge/core/codec.hpp"
#include "sketchforge/core/hash.hpp"
#include "sketchforge/core/logging.hpp"

namespace fs = std::filesystem;

namespace sf {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

ServiceError bad_request(const std::string &code, const std::string &msg) {
  return ServiceError(400, code, msg);
}

} // namespace

nlohmann::json ServiceError::to_json() const {
  nlohmann::json e = {{"code", code_}, {"message", what()}, {"retryable", retryable()}};
  if (stroke_index_)
    e["stroke_index"] = *stroke_index_;
  return {{"error", e}};
}

// ---------------------------------------------------------------------------

SynthesisRequest SynthesisRequest::from_json(const nlohmann::json &j) {
  if (!j.is_object())
    throw bad_request("malformed_request", "request body must be a JSON object");
  SynthesisRequest r;
  try {
    if (!j.contains("mode") || !j["mode"].is_string())
      throw bad_request("malformed_request", "missing 'mode'");
    r.mode = parse_mode(j["mode"].get<std::string>());
  } catch (const ConfigError &e) {
    throw bad_request("malformed_request", e.what());
  }
  if (!j.contains("model_id") || !j["model_id"].is_string())
    throw bad_request("malformed_request", "missing 'model_id'");
  r.model_id = j["model_id"].get<std::string>();
  if (j.contains("output_size")) {
    if (!j["output_size"].is_number_integer())
      throw bad_request("malformed_request", "'output_size' must be an integer");
    r.output_size = j["output_size"].get<int>();
  }
  if (!j.contains("image") || !j["image"].is_string())
    throw bad_request("malformed_request",
                      r.mode == Mode::colorization ? "colorization needs a grayscale 'image'"
                                                   : "missing sketch 'image'");
  try {
    r.image_png = base64_decode(j["image"].get<std::string>());
  } catch (const ValidationError &e) {
    throw bad_request("bad_image", std::string("image: ") + e.what());
  }
  if (j.contains("strokes") && !j["strokes"].is_null()) {
    try {
      r.strokes = StrokeSet::from_json(j["strokes"]);
    } catch (const StrokeError &e) {
      throw ServiceError(400, "malformed_strokes", e.what(), e.index());
    } catch (const ValidationError &e) {
      throw ServiceError(400, "malformed_strokes", e.what());
    }
  }
  if (r.mode == Mode::sketch2photo && r.strokes && !r.strokes->strokes.empty())
    throw bad_request("malformed_request", "sketch2photo takes no strokes");
  return r;
}

SynthesisRequest SynthesisRequest::parse(const std::string &body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error &e) {
    throw bad_request("malformed_request", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

nlohmann::json SynthesisRequest::to_json() const {
  nlohmann::json j = {{"mode", to_string(mode)},
                      {"model_id", model_id},
                      {"output_size", output_size},
                      {"image", base64_encode(image_png)}};
  if (strokes)
    j["strokes"] = strokes->to_json();
  return j;
}

std::string SynthesisRequest::hash() const { return sha256_hex(to_json().dump()); }

nlohmann::json SynthesisResponse::to_json() const {
  return {{"image", base64_encode(image_png)},
          {"width", width},
          {"height", height},
          {"latency_ms", latency_ms},
          {"total_ms", total_ms},
          {"model_id", model_id},
          {"request_hash", request_hash}};
}

nlohmann::json ModelInfo::to_json() const {
  return {{"model_id", model_id},
          {"mode", mode},
          {"stage", stage},
          {"multiple_of", multiple_of},
          {"resolution_hints", resolution_hints},
          {"param_count", param_count}};
}

std::string device_from_env() {
  const char *d = std::getenv("SKETCHFORGE_DEVICE");
  return d ? std::string(d) : std::string();
}

ImageBuffer compose_request_input(Mode mode, const ImageBuffer &image,
                                  const std::optional<StrokeSet> &strokes, int size) {
  ImageBuffer gray = image.channels() == 1 ? image : luma(image);
  if (gray.height() != size || gray.width() != size)
    gray = resize_bilinear(gray, size, size);
  const StrokeSet set = strokes.value_or(StrokeSet{});
  set.validate(size, size);
  switch (mode) {
  case Mode::colorization:
    return compose_colorization_input(gray, set);
  case Mode::sketch_strokes:
    return compose_sketch_input(gray, set);
  case Mode::sketch2photo:
    break;
  }
  return compose_sketch_input(gray, StrokeSet{});
}

// ---------------------------------------------------------------------------

SynthesisService::SynthesisService(ServiceOptions options) : options_(std::move(options)) {
  if (options_.device.empty())
    options_.device = device_from_env();
  if (options_.device.empty())
    options_.device = "cpu";
  if (options_.queue_capacity == 0)
    throw ConfigError("queue_capacity must be >= 1");
  worker_ = std::thread([this] { worker_loop(); });
}

SynthesisService::~SynthesisService() {
  {
    std::lock_guard lk(queue_mu_);
    stop_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable())
    worker_.join();
  if (loader_.joinable())
    loader_.join();
}

void SynthesisService::start() {
  if (loader_.joinable())
    return;
  loading_ = true;
  loader_ = std::thread([this] { load_models(); });
}

void SynthesisService::wait_ready() {
  if (loader_.joinable())
    loader_.join();
}

void SynthesisService::load_models() {
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(options_.models_dir, ec)) {
    for (const auto &e : fs::directory_iterator(options_.models_dir, ec))
      if (e.is_regular_file() && e.path().extension() == ".skf")
        files.push_back(e.path());
  } else {
    std::lock_guard lk(models_mu_);
    load_failures_.push_back("models directory " + options_.models_dir.string() +
                             " does not exist");
  }
  std::sort(files.begin(), files.end());
  for (const auto &f : files) {
    try {
      LoadedGenerator lg = load_generator(f);
      ModelInfo info;
      info.model_id = f.stem().string();
      info.mode = lg.info.mode;
      info.stage = lg.info.stage;
      info.multiple_of = lg.generator.config().downscale();
      for (int s : {128, 256})
        if (s % info.multiple_of == 0)
          info.resolution_hints.push_back(s);
      info.param_count = lg.generator.param_count();
      info.path = f;
      parse_mode(info.mode); // reject checkpoints with an unknown mode
      const std::string id = info.model_id;
      auto g = std::make_shared<const Generator>(std::move(lg.generator));
      std::lock_guard lk(models_mu_);
      models_[id] = {std::move(g), std::move(info)};
      logger()->info("loaded model {} from {}", id, f.string());
    } catch (const std::exception &e) {
      logger()->warn("skipping checkpoint {}: {}", f.string(), e.what());
      std::lock_guard lk(models_mu_);
      load_failures_.push_back(f.filename().string() + ": " + e.what());
    }
  }
  loaded_ = true;
  loading_ = false;
}

void SynthesisService::add_model(const std::string &id, std::shared_ptr<const Generator> g,
                                 ModelInfo info) {
  info.model_id = id;
  info.multiple_of = g->config().downscale();
  info.param_count = g->param_count();
  std::lock_guard lk(models_mu_);
  models_[id] = {std::move(g), std::move(info)};
  loaded_ = true;
}

std::vector<ModelInfo> SynthesisService::list_models() const {
  std::lock_guard lk(models_mu_);
  std::vector<ModelInfo> out;
  for (const auto &[id, m] : models_)
    out.push_back(m.second);
  return out;
}

nlohmann::json SynthesisService::health() const {
  std::lock_guard lk(models_mu_);
  nlohmann::json h = {{"loaded_models", models_.size()}, {"device", options_.device}};
  std::vector<std::string> reasons = load_failures_;
  if (options_.device != "cpu")
    reasons.push_back("device '" + options_.device + "' is not supported; running on cpu");
  if (loading_)
    h["status"] = "loading";
  else if (!reasons.empty())
    h["status"] = "degraded";
  else
    h["status"] = "ok";
  if (!reasons.empty())
    h["reasons"] = reasons;
  return h;
}

SynthesisResponse SynthesisService::synthesize(const SynthesisRequest &req) {
  auto job = std::make_unique<Job>();
  job->request = req;
  auto fut = job->result.get_future();
  {
    std::lock_guard lk(queue_mu_);
    if (queue_.size() >= options_.queue_capacity)
      throw ServiceError(503, "queue_full",
                         fmt::format("inference queue is full ({} waiting); retry later",
                                     queue_.size()));
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
  return fut.get();
}

void SynthesisService::worker_loop() {
  for (;;) {
    std::unique_ptr<Job> job;
    {
      std::unique_lock lk(queue_mu_);
      queue_cv_.wait(lk, [&] { return stop_ || !queue_.empty(); });
      if (queue_.empty())
        return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      job->result.set_value(run(job->request));
    } catch (...) {
      job->result.set_exception(std::current_exception());
    }
  }
}

SynthesisResponse SynthesisService::run(const SynthesisRequest &req) const {
  const auto t0 = Clock::now();
  std::shared_ptr<const Generator> g;
  ModelInfo info;
  {
    std::lock_guard lk(models_mu_);
    auto it = models_.find(req.model_id);
    if (it == models_.end())
      throw ServiceError(404, "unknown_model", "no model named '" + req.model_id + "'");
    g = it->second.first;
    info = it->second.second;
  }
  if (info.mode != to_string(req.mode))
    throw bad_request("mode_mismatch", fmt::format("model {} serves {}, request asks for {}",
                                                   req.model_id, info.mode, to_string(req.mode)));
  const int size = req.output_size;
  const int k = g->config().downscale();
  if (size < k || size > options_.max_output_size || size % k != 0)
    throw bad_request("bad_output_size",
                      fmt::format("output_size {} must be a multiple of {} in [{}, {}]", size, k,
                                  k, options_.max_output_size));

  ImageBuffer image;
  try {
    image = decode_image(req.image_png);
  } catch (const IoError &e) {
    throw bad_request("bad_image", e.what());
  }
  ImageBuffer input;
  try {
    input = compose_request_input(req.mode, image, req.strokes, size);
  } catch (const StrokeError &e) {
    throw ServiceError(400, "malformed_strokes", e.what(), e.index());
  }

  const Tensor x = to_tensor(to_signed(input));
  const auto tf = Clock::now();
  const Tensor y = g->forward(x);
  const double forward_ms = ms_since(tf);

  SynthesisResponse r;
  r.image_png = encode_png(to_unit(to_image(y, 0, ValueRange::signed_)));
  r.width = r.height = size;
  r.latency_ms = forward_ms;
  r.model_id = req.model_id;
  r.request_hash = req.hash();
  r.total_ms = ms_since(t0);
  return r;
}

} // namespace sf
