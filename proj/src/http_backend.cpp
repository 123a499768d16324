#include <httplib.h>

#include <cstdio>
#include <cstdlib>

#include <json.hpp>

#include "dike/provider.hpp"

namespace dike {

using nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v != nullptr ? std::string(v) : fallback;
}

std::string system_prompt(const ProviderRequest& request) {
  std::string s;
  switch (request.role) {
    case Role::kRewriter:
      s = "You rewrite documents to exhibit a requested linguistic behavior while keeping their "
          "structure.";
      break;
    case Role::kEmotionAnalyst:
      s = "You identify the emotions expressed in a document.";
      break;
    case Role::kDikeAgent:
      s = "You are DIKE, an agent that defends its behavior classification of a document.";
      break;
    case Role::kEris:
      s = "You are ERIS, an adversarial agent that challenges the classification under review.";
      break;
    case Role::kConciliator:
      s = "You summarize a finished debate into a joint conciliatory statement.";
      break;
  }
  if (request.stance) s += "\nStance: " + *request.stance;
  if (request.contentiousness) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "\nContentiousness: %.4f", *request.contentiousness);
    s += buf;
  }
  return s;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  c.base_url = env_or("DIKE_LLM_BASE_URL");
  c.api_key = env_or("DIKE_LLM_API_KEY");
  c.model = env_or("DIKE_LLM_MODEL", "gpt-4");
  return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw Error(ErrorCode::kConfig, "live provider needs DIKE_LLM_BASE_URL");
  }
}

std::string HttpBackend::build_body(const ProviderRequest& request, const std::string& model) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", system_prompt(request)}});
  for (const auto& segment : request.context) {
    messages.push_back({{"role", "user"}, {"content", segment}});
  }
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  json body = {{"model", model}, {"messages", messages}};
  for (const auto& [key, value] : request.params) {
    // Numeric knobs go through as numbers when they parse as such.
    char* end = nullptr;
    const double num = std::strtod(value.c_str(), &end);
    if (end != value.c_str() && *end == '\0') {
      body[key] = num;
    } else {
      body[key] = value;
    }
  }
  return body.dump();
}

ProviderResponse HttpBackend::complete(const ProviderRequest& request) {
  request.validate();
  const auto fp = fingerprint(request);
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(10);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(config_.path, headers, build_body(request, config_.model),
                         "application/json");
  if (!res) {
    throw Error(ErrorCode::kBackendUnavailable,
                "live backend unreachable: " + httplib::to_string(res.error()));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kBackendUnavailable,
                "live backend returned HTTP " + std::to_string(res->status) + " with non-JSON body");
  }
  if (res->status >= 400) {
    std::string code;
    if (body.contains("error") && body["error"].is_object()) {
      code = body["error"].value("code", "");
    }
    if (code == "content_filter" || code == "content_policy_violation") {
      throw RefusalError(body["error"].value("message", "refused"), fp);
    }
    throw Error(ErrorCode::kBackendUnavailable, "live backend HTTP " + std::to_string(res->status));
  }
  try {
    const auto& choice = body.at("choices").at(0);
    const auto& message = choice.at("message");
    if (choice.value("finish_reason", "") == "content_filter" ||
        (message.contains("refusal") && message["refusal"].is_string())) {
      throw RefusalError(message.value("refusal", std::string("content filtered")), fp);
    }
    ProviderResponse out;
    out.text = message.at("content").get<std::string>();
    out.fingerprint = fp;
    if (body.contains("usage") && body["usage"].is_object()) {
      for (const auto& [key, value] : body["usage"].items()) {
        if (value.is_number_integer()) out.usage[key] = value.get<long long>();
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBackendUnavailable, std::string("malformed completion: ") + e.what());
  }
}

}  // namespace dike
