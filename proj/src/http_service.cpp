#include "dike/http_service.hpp"

#include <httplib.h>

#include "dike/engine.hpp"
#include "dike/serialize.hpp"
#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kNotReady: return 409;
    case ErrorCode::kRefusal: return 422;
    case ErrorCode::kMissingFixture:
    case ErrorCode::kCassetteCorrupt:
    case ErrorCode::kBackendUnavailable: return 502;
    case ErrorCode::kStorageUnavailable: return 503;
    case ErrorCode::kCritUnavailable:
    case ErrorCode::kSchemaMismatch:
    case ErrorCode::kConfig:
    case ErrorCode::kInternal: return 500;
    default: return 400;
  }
}

struct HttpService::Impl {
  Engine& engine;
  httplib::Server server;

  explicit Impl(Engine& e) : engine(e) {}

  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void fail(httplib::Response& res, const Error& e) {
    send(res, http_status(e.code()), engine.describe_error(e));
  }

  bool authorized(const httplib::Request& req, httplib::Response& res) {
    const auto& token = engine.config().api_token;
    if (token.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + token) return true;
    send(res, 401, json{{"error", {{"code", "Unauthorized"}, {"message", "missing or wrong bearer token"}}}});
    return false;
  }

  // Runs op with the given request body, mapping errors to statuses.
  void dispatch(httplib::Response& res, std::string_view op, const json& body) {
    try {
      send(res, 200, engine.handle(op, body));
    } catch (const Error& e) {
      fail(res, e);
    } catch (const std::exception& e) {
      fail(res, Error(ErrorCode::kInternal, e.what()));
    }
  }

  std::optional<json> body_of(const httplib::Request& req, httplib::Response& res) {
    const auto type = text::to_lower(req.get_header_value("Content-Type"));
    if (type.rfind("application/json", 0) != 0) {
      send(res, 415, json{{"error", {{"code", "UnsupportedMediaType"}, {"message", "Content-Type must be application/json"}}}});
      return std::nullopt;
    }
    try {
      auto j = json::parse(req.body.empty() ? "{}" : req.body);
      if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object", "$");
      return j;
    } catch (const json::exception& e) {
      fail(res, Error(ErrorCode::kParseError, std::string("request body: ") + e.what(), "$"));
    } catch (const Error& e) {
      fail(res, e);
    }
    return std::nullopt;
  }

  void post(const std::string& path, std::string op) {
    server.Post(path, [this, op](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      if (auto body = body_of(req, res)) dispatch(res, op, *body);
    });
  }

  void get(const std::string& path, std::string op) {
    server.Get(path, [this, op](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      dispatch(res, op, json::object());
    });
  }

  void routes() {
    post("/v1/classify", "classify");
    post("/v1/guard", "guard");
    post("/v1/rectify", "rectify");
    post("/v1/debate", "debate");
    get("/v1/matrix", "matrix");
    get("/v1/spectra", "spectra");
    get("/v1/status", "status");
    server.Get("/v1/reviews", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      json q = json::object();
      if (req.has_param("status")) q["status"] = req.get_param_value("status");
      dispatch(res, "reviews.list", q);
    });
    server.Get(R"(/v1/reviews/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      dispatch(res, "reviews.get", json{{"id", req.matches[1].str()}});
    });
    server.Post(R"(/v1/reviews/([A-Za-z0-9._-]+)/decision)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  if (!authorized(req, res)) return;
                  auto body = body_of(req, res);
                  if (!body) return;
                  (*body)["id"] = req.matches[1].str();
                  dispatch(res, "reviews.decide", *body);
                });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      send(res, res.status, json{{"error", {{"code", res.status == 404 ? "NotFound" : "HttpError"},
                                            {"message", httplib::status_message(res.status)}}}});
    });
  }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) { impl_->routes(); }

HttpService::~HttpService() { stop(); }

void HttpService::mount_static(const std::string& dir) {
  if (!impl_->server.set_mount_point("/", dir)) {
    throw Error(ErrorCode::kConfig, "cannot serve static files from " + dir, "static_dir");
  }
}

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error(ErrorCode::kConfig, "cannot bind " + host, "port");
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kConfig, "cannot bind " + host + ":" + std::to_string(port), "port");
  }
  return port;
}

void HttpService::run() { impl_->server.listen_after_bind(); }

void HttpService::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace dike
