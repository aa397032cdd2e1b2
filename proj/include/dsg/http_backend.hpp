#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dsg/diffusion.hpp"

namespace dsg {

// HTTP POST /v1/texture and /v1/inpaint, JSON bodies as in request_to_json.
// Transient failures are retried with exponential backoff; after the last
// retry a BackendError propagates and the pipeline records the image as
// failed.
class HttpTexturingClient final : public TexturingClient {
 public:
  explicit HttpTexturingClient(std::string base_url, int max_retries = 3,
                               int backoff_initial_ms = 500)
      : base_url_(std::move(base_url)),
        max_retries_(max_retries),
        backoff_initial_ms_(backoff_initial_ms) {}

 protected:
  TexturingResult do_submit(const TexturingRequest& req) override {
    const char* path =
        req.mode == TexturingRequest::Mode::depth_texture ? "/v1/texture" : "/v1/inpaint";
    const std::string body = request_to_json(req).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(backoff_initial_ms_ << (attempt - 1)));
      }
      auto t0 = std::chrono::steady_clock::now();
      httplib::Client client(base_url_);
      client.set_read_timeout(600, 0);
      httplib::Result res = client.Post(path, body, "application/json");
      if (!res) {
        last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        continue;
      }
      try {
        nlohmann::json j = nlohmann::json::parse(res->body);
        TexturingResult out;
        out.rgb = base64_png_to_image(j.at("image").get<std::string>());
        out.backend_id = j.value("model_id", "unknown");
        out.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
      } catch (const std::exception& e) {
        last_error = std::string("bad response: ") + e.what();
      }
    }
    fail(Errc::backend_error, "texturing backend failed after " +
                                  std::to_string(max_retries_ + 1) + " attempts: " + last_error);
  }

 private:
  std::string base_url_;
  int max_retries_;
  int backoff_initial_ms_;
};

// Deterministic mock server implementing the wire protocol; the test double
// for a real depth-ControlNet + inpainting deployment.
class MockBackendServer {
 public:
  ~MockBackendServer() { stop(); }

  // Binds and serves on a background thread. Throws PortInUse when the port
  // cannot be bound.
  void start(int port, const std::string& host = "127.0.0.1") {
    setup_routes();
    if (!server_.bind_to_port(host, port))
      fail(Errc::port_in_use, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  // Serves on the calling thread (CLI `mock-server` subcommand).
  void run(int port, const std::string& host = "0.0.0.0") {
    setup_routes();
    if (!server_.bind_to_port(host, port))
      fail(Errc::port_in_use, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
    server_.listen_after_bind();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  void setup_routes() {
    auto handle = [](TexturingRequest::Mode mode) {
      return [mode](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", std::string("malformed JSON: ") + e.what()}}.dump(),
                          "application/json");
          return;
        }
        try {
          TexturingRequest treq = request_from_json(body, mode);
          TexturingResult tres = mock_generate(treq);
          nlohmann::json out{{"image", image_to_base64_png(tres.rgb)},
                             {"model_id", tres.backend_id}};
          res.set_content(out.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    server_.Post("/v1/texture", handle(TexturingRequest::Mode::depth_texture));
    server_.Post("/v1/inpaint", handle(TexturingRequest::Mode::inpaint));
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"status", "ok"}, {"model_id", kMockBackendId}}.dump(),
                      "application/json");
    });
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace dsg
