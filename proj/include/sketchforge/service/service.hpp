#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/image.hpp"
#include "sketchforge/dataset/dataset.hpp"
#include "sketchforge/model/checkpoint.hpp"
#include "sketchforge/strokes/strokes.hpp"

namespace sf {

/// Request failure carrying an HTTP-style status (400, 404, 503, 500).
class ServiceError : public Error {
public:
  ServiceError(int status, std::string code, const std::string &message,
               std::optional<int> stroke_index = std::nullopt)
      : Error(message), status_(status), code_(std::move(code)), stroke_index_(stroke_index) {}
  int status() const { return status_; }
  const std::string &code() const { return code_; }
  std::optional<int> stroke_index() const { return stroke_index_; }
  bool retryable() const { return status_ == 503; }
  nlohmann::json to_json() const;

private:
  int status_;
  std::string code_;
  std::optional<int> stroke_index_;
};

/// Wire format (JSON):
///   {"mode": "sketch2photo" | "sketch_strokes" | "colorization",
///    "model_id": "...", "output_size": 256,
///    "image": "<base64 PNG: sketch, or grayscale photo for colorization>",
///    "strokes": {"strokes": [...]}}            // optional
/// Stroke coordinates are pixels of the output_size x output_size canvas.
struct SynthesisRequest {
  Mode mode = Mode::sketch2photo;
  std::string model_id;
  int output_size = 256;
  std::vector<std::uint8_t> image_png;
  std::optional<StrokeSet> strokes;

  /// Throws ServiceError(400) with the stroke index for bad strokes.
  static SynthesisRequest from_json(const nlohmann::json &j);
  static SynthesisRequest parse(const std::string &body);
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
};

struct SynthesisResponse {
  std::vector<std::uint8_t> image_png;
  int width = 0;
  int height = 0;
  double latency_ms = 0.0; ///< generator forward pass only
  double total_ms = 0.0;   ///< decode + compose + forward + encode
  std::string model_id;
  std::string request_hash;

  nlohmann::json to_json() const;
};

struct ModelInfo {
  std::string model_id;
  std::string mode;
  std::string stage;
  int multiple_of = 1;             ///< accepted sizes are multiples of this
  std::vector<int> resolution_hints;
  std::size_t param_count = 0;
  std::filesystem::path path;

  nlohmann::json to_json() const;
};

struct ServiceOptions {
  std::filesystem::path models_dir = "models";
  std::size_t queue_capacity = 8;
  /// Defaults to $SKETCHFORGE_DEVICE, else "cpu".
  std::string device;
  int max_output_size = 1024;
};

/// Device named by SKETCHFORGE_DEVICE (empty when unset).
std::string device_from_env();

/// Composes the generator input for a request, exactly as the service does.
/// `image` is resized to size x size first; strokes are validated against
/// that canvas.
ImageBuffer compose_request_input(Mode mode, const ImageBuffer &image,
                                  const std::optional<StrokeSet> &strokes, int size);

/// Loads every *.skf under models_dir (skipping and logging broken ones)
/// and answers requests with one worker thread behind a bounded queue.
class SynthesisService {
public:
  explicit SynthesisService(ServiceOptions options);
  ~SynthesisService();
  SynthesisService(const SynthesisService &) = delete;
  SynthesisService &operator=(const SynthesisService &) = delete;

  /// Scans and loads models on a background thread; health() reports
  /// "loading" until done.
  void start();
  /// Blocks until loading has finished.
  void wait_ready();

  SynthesisResponse synthesize(const SynthesisRequest &req);
  std::vector<ModelInfo> list_models() const;
  nlohmann::json health() const;
  /// Registers an in-memory model (tests, benchmarks).
  void add_model(const std::string &id, std::shared_ptr<const Generator> g, ModelInfo info);

private:
  struct Job {
    SynthesisRequest request;
    std::promise<SynthesisResponse> result;
  };

  void load_models();
  void worker_loop();
  SynthesisResponse run(const SynthesisRequest &req) const;

  ServiceOptions options_;
  mutable std::mutex models_mu_;
  std::map<std::string, std::pair<std::shared_ptr<const Generator>, ModelInfo>> models_;
  std::vector<std::string> load_failures_;
  std::atomic<bool> loading_{false};
  std::atomic<bool> loaded_{false};
  std::thread loader_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::unique_ptr<Job>> queue_;
  bool stop_ = false;
  std::thread worker_;
};

/// HTTP front end: POST /v1/synthesize, GET /v1/models, GET /v1/health.
/// Errors are JSON bodies {"error": {"code", "message", "stroke_index"?}}.
class HttpFrontend {
public:
  explicit HttpFrontend(SynthesisService &service);
  ~HttpFrontend();
  /// Binds and serves until stop(); returns false if binding failed.
  bool listen(const std::string &host, int port);
  /// Binds to an ephemeral port and serves on a background thread.
  int listen_background(const std::string &host);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace sf
