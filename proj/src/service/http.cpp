#include <httplib.h>

#include "sketchforge/core/logging.hpp"
#include "sketchforge/service/service.hpp"

namespace sf {

struct HttpFrontend::Impl {
  SynthesisService &service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SynthesisService &s) : service(s) {}
};

namespace {

void send_json(httplib::Response &res, int status, const nlohmann::json &body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

} // namespace

HttpFrontend::HttpFrontend(SynthesisService &service) : impl_(std::make_unique<Impl>(service)) {
  auto &srv = impl_->server;
  auto &svc = impl_->service;

  srv.Post("/v1/synthesize", [&svc](const httplib::Request &req, httplib::Response &res) {
    try {
      const SynthesisRequest r = SynthesisRequest::parse(req.body);
      send_json(res, 200, svc.synthesize(r).to_json());
    } catch (const ServiceError &e) {
      if (e.status() == 503)
        res.set_header("Retry-After", "1");
      send_json(res, e.status(), e.to_json());
    } catch (const std::exception &e) {
      logger()->error("synthesize failed: {}", e.what());
      send_json(res, 500, ServiceError(500, "internal", e.what()).to_json());
    }
  });

  srv.Get("/v1/models", [&svc](const httplib::Request &, httplib::Response &res) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &m : svc.list_models())
      arr.push_back(m.to_json());
    send_json(res, 200, {{"models", arr}});
  });

  srv.Get("/v1/health", [&svc](const httplib::Request &, httplib::Response &res) {
    send_json(res, 200, svc.health());
  });

  srv.set_error_handler([](const httplib::Request &req, httplib::Response &res) {
    if (res.status == 404 && res.body.empty())
      send_json(res, 404,
                ServiceError(404, "not_found", "no route for " + req.method + " " + req.path)
                    .to_json());
  });
  srv.set_payload_max_length(64u << 20);
}

HttpFrontend::~HttpFrontend() { stop(); }

bool HttpFrontend::listen(const std::string &host, int port) {
  logger()->info("listening on {}:{}", host, port);
  return impl_->server.listen(host, port);
}

int HttpFrontend::listen_background(const std::string &host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0)
    return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpFrontend::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable())
    impl_->thread.join();
}

} // namespace sf
