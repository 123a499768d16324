#pragma once

#include <memory>
#include <string>

#include "dike/error.hpp"

namespace dike {

class Engine;

// HTTP status for an error category.
int http_status(ErrorCode code);

// The /v1 JSON API over an Engine:
//   POST /v1/classify /v1/guard /v1/rectify /v1/debate
//   GET  /v1/reviews[?status=] /v1/reviews/{id}   POST /v1/reviews/{id}/decision
//   GET  /v1/matrix /v1/spectra /v1/status
class HttpService {
 public:
  explicit HttpService(Engine& engine);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Serves files from dir under "/" (the review console build).
  void mount_static(const std::string& dir);
  // port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dike
