#include "dike/dike.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>

#include "dike/engine.hpp"
#include "dike/http_service.hpp"
#include "dike/serialize.hpp"

using nlohmann::json;

struct dike_reply {
  std::string text;
  bool refused = false;
  bool set = false;
};

struct dike_engine {
  std::unique_ptr<dike::Engine> engine;
  std::mutex serve_mutex;
  dike::HttpService* service = nullptr;
  bool stop_requested = false;
};

namespace {

thread_local std::string last_error;

dike_status remember(const json& err, dike::ErrorCode code) {
  last_error = err.dump();
  return static_cast<dike_status>(code);
}

dike_status remember(const dike::Error& e) { return remember(dike::error_json(e), e.code()); }

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json request_json(const dike::ProviderRequest& r) {
  json j = {{"role", dike::to_string(r.role)}, {"prompt", r.prompt}, {"context", r.context}};
  if (r.stance) j["stance"] = *r.stance;
  if (r.contentiousness) j["contentiousness"] = *r.contentiousness;
  if (!r.params.empty()) j["params"] = r.params;
  return j;
}

std::shared_ptr<dike::Provider> host_backend(dike_backend_fn fn, void* user) {
  return std::make_shared<dike::CallbackProvider>(
      [fn, user](const dike::ProviderRequest& req) {
        const auto fp = dike::fingerprint(req);
        dike_reply reply;
        const dike_status st = fn(user, request_json(req).dump().c_str(), &reply);
        if (st != DIKE_OK || !reply.set) {
          throw dike::Error(dike::ErrorCode::kBackendUnavailable,
                            std::string("host backend failed: ") + dike_status_name(st));
        }
        if (reply.refused) throw dike::RefusalError(reply.text, fp);
        return dike::ProviderResponse{reply.text, {}, fp};
      },
      "host");
}

class HostCrit final : public dike::CritScorer {
 public:
  HostCrit(dike_crit_fn fn, void* user) : fn_(fn), user_(user) {}
  double score(std::string_view bundle) override { return fn_(user_, std::string(bundle).c_str()); }

 private:
  dike_crit_fn fn_;
  void* user_;
};

dike::ServiceConfig parse_config(const char* config_json) {
  auto c = dike::ServiceConfig::from_env();
  if (config_json == nullptr || *config_json == '\0') return c;
  const json j = dike::parse_json(config_json, "config");
  if (!j.is_object()) throw dike::Error(dike::ErrorCode::kConfig, "config must be a JSON object", "$");
  try {
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("provider")) c.provider_mode = dike::provider_mode_from_string(j["provider"].get<std::string>());
    if (j.contains("cassette")) c.cassette_path = j["cassette"].get<std::string>();
    if (j.contains("port")) c.port = j["port"].get<int>();
    if (j.contains("top_m")) c.top_m = j["top_m"].get<int>();
    if (j.contains("api_token")) c.api_token = j["api_token"].get<std::string>();
    if (j.contains("feature_hints")) c.feature_hints = j["feature_hints"].get<bool>();
    if (j.contains("max_in_flight")) c.max_in_flight = j["max_in_flight"].get<std::size_t>();
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      if (p.is_string()) {
        c.policy = dike::Guardrail::from_range(p.get<std::string>(), c.policy);
      } else {
        json merged = c.policy;
        merged.merge_patch(p);
        c.policy = dike::Guardrail::from_json(merged.dump());
      }
    }
    if (j.contains("debate")) {
      json merged = c.debate;
      merged.merge_patch(j["debate"]);
      c.debate = merged.get<dike::DebateConfig>();
    }
  } catch (const json::exception& e) {
    throw dike::Error(dike::ErrorCode::kConfig, std::string("config: ") + e.what(), "$");
  }
  return c;
}

}  // namespace

extern "C" {

const char* dike_version(void) { return "1.0.0"; }

const char* dike_status_name(dike_status status) {
  if (status == DIKE_OK) return "OK";
  if (status < DIKE_INVALID_ARGUMENT || status > DIKE_INTERNAL) return "Unknown";
  static thread_local std::string name;
  name = std::string(dike::to_string(static_cast<dike::ErrorCode>(status)));
  return name.c_str();
}

void dike_reply_set_text(dike_reply* reply, const char* text) {
  if (reply == nullptr) return;
  reply->text = text != nullptr ? text : "";
  reply->refused = false;
  reply->set = true;
}

void dike_reply_set_refusal(dike_reply* reply, const char* message) {
  if (reply == nullptr) return;
  reply->text = message != nullptr ? message : "refused";
  reply->refused = true;
  reply->set = true;
}

dike_status dike_engine_open(const char* config_json, const dike_hooks* hooks, dike_engine** out) {
  last_error.clear();
  if (out == nullptr) return remember(dike::Error(dike::ErrorCode::kInvalidArgument, "out is NULL", "out"));
  *out = nullptr;
  try {
    std::shared_ptr<dike::Provider> backend;
    std::shared_ptr<dike::CritScorer> crit;
    if (hooks != nullptr && hooks->backend != nullptr) backend = host_backend(hooks->backend, hooks->backend_user);
    if (hooks != nullptr && hooks->crit != nullptr) crit = std::make_shared<HostCrit>(hooks->crit, hooks->crit_user);
    auto handle = std::make_unique<dike_engine>();
    handle->engine = std::make_unique<dike::Engine>(parse_config(config_json), backend, crit);
    *out = handle.release();
    return DIKE_OK;
  } catch (const dike::Error& e) {
    return remember(e);
  } catch (const std::exception& e) {
    return remember(dike::Error(dike::ErrorCode::kInternal, e.what()));
  }
}

void dike_engine_close(dike_engine* engine) {
  if (engine == nullptr) return;
  dike_stop(engine);
  delete engine;
}

dike_status dike_call(dike_engine* engine, const char* op, const char* request_json, char** response_json) {
  last_error.clear();
  if (response_json != nullptr) *response_json = nullptr;
  json out;
  dike_status status = DIKE_OK;
  if (op == nullptr) {
    const dike::Error e(dike::ErrorCode::kInvalidArgument, "op is required", "op");
    out = dike::error_json(e);
    status = remember(out, e.code());
  } else {
    try {
      const json req = request_json == nullptr || *request_json == '\0'
                           ? json::object()
                           : dike::parse_json(request_json, "request");
      if (engine != nullptr) {
        out = engine->engine->handle(op, req);
      } else if (auto stateless = dike::handle_stateless(op, req)) {
        out = *stateless;
      } else {
        throw dike::Error(dike::ErrorCode::kInvalidArgument, std::string(op) + " needs an engine", "engine");
      }
    } catch (const dike::Error& e) {
      out = engine != nullptr ? engine->engine->describe_error(e) : dike::error_json(e);
      status = remember(out, e.code());
    } catch (const std::exception& e) {
      const dike::Error err(dike::ErrorCode::kInternal, e.what());
      out = dike::error_json(err);
      status = remember(out, err.code());
    }
  }
  if (response_json != nullptr) *response_json = dup(out.dump());
  return status;
}

dike_status dike_serve(dike_engine* engine, const char* host, int port, const char* static_dir,
                       void (*on_bound)(void* user, int port), void* user) {
  last_error.clear();
  if (engine == nullptr) return remember(dike::Error(dike::ErrorCode::kInvalidArgument, "engine is NULL", "engine"));
  try {
    dike::HttpService service(*engine->engine);
    if (static_dir != nullptr && *static_dir != '\0') service.mount_static(static_dir);
    const int bound = service.bind(host != nullptr ? host : "127.0.0.1", port);
    {
      std::lock_guard g(engine->serve_mutex);
      if (engine->stop_requested) {
        engine->stop_requested = false;
        return DIKE_OK;
      }
      engine->service = &service;
    }
    if (on_bound != nullptr) on_bound(user, bound);
    service.run();
    std::lock_guard g(engine->serve_mutex);
    engine->service = nullptr;
    engine->stop_requested = false;
    return DIKE_OK;
  } catch (const dike::Error& e) {
    return remember(e);
  } catch (const std::exception& e) {
    return remember(dike::Error(dike::ErrorCode::kInternal, e.what()));
  }
}

void dike_stop(dike_engine* engine) {
  if (engine == nullptr) return;
  std::lock_guard g(engine->serve_mutex);
  engine->stop_requested = true;
  if (engine->service != nullptr) engine->service->stop();
}

void dike_string_free(char* s) { std::free(s); }

const char* dike_last_error(void) { return last_error.c_str(); }

}  // extern "C"
