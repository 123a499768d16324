#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dike/error.hpp"

namespace dike {

enum class Role { kRewriter, kEmotionAnalyst, kDikeAgent, kEris, kConciliator };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);
bool is_debate_role(Role role);

struct ProviderRequest {
  Role role = Role::kRewriter;
  std::optional<std::string> stance;
  // Debate contentiousness, (0, 1]. Present iff role is a debate agent or the
  // conciliator.
  std::optional<double> contentiousness;
  std::string prompt;
  std::vector<std::string> context;
  // Opaque pass-through knobs (temperature and friends); not fingerprinted.
  std::map<std::string, std::string> params;

  // Throws Error{kInvalidArgument} with a field path.
  void validate() const;
};

struct ProviderResponse {
  std::string text;
  std::map<std::string, long long> usage;
  std::string fingerprint;
};

// SHA-256 over role, stance, contentiousness rounded to 4 decimals, and the
// whitespace-normalized prompt and context segments.
std::string fingerprint(const ProviderRequest& request);
// Short human-readable summary stored next to each cassette entry.
std::string request_digest(const ProviderRequest& request);

// Thrown when a backend declines the content. Never retried.
class RefusalError : public Error {
 public:
  RefusalError(const std::string& message, std::string fingerprint)
      : Error(ErrorCode::kRefusal, message), fingerprint_(std::move(fingerprint)) {}
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::string fingerprint_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Must be safe to call from several threads at once.
  virtual ProviderResponse complete(const ProviderRequest& request) = 0;
  // "live", "replay", "record", ...; reported with provider errors.
  virtual std::string_view provenance() const = 0;
};

struct CassetteEntry {
  std::string fingerprint;
  std::string request_digest;
  std::string text;
  bool refusal = false;
};

// Append-only JSON-lines file. Line 1 is a header object
// {"cassette_version":1,"params":{...}}; every further line is one entry.
class Cassette {
 public:
  static constexpr int kVersion = 1;

  Cassette() = default;
  static Cassette load(const std::string& path);
  static Cassette parse(std::string_view content, const std::string& origin = "<memory>");

  const std::map<std::string, std::string>& params() const noexcept { return params_; }
  const std::map<std::string, CassetteEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const CassetteEntry* find(const std::string& fingerprint) const;

  void add(CassetteEntry entry) { entries_[entry.fingerprint] = std::move(entry); }
  void set_params(std::map<std::string, std::string> params) { params_ = std::move(params); }

  static std::string header_line(const std::map<std::string, std::string>& params);
  static std::string entry_line(const CassetteEntry& entry);

 private:
  std::map<std::string, std::string> params_;
  std::map<std::string, CassetteEntry> entries_;
};

// Serves only what a cassette holds; unseen fingerprints raise MissingFixture.
class ReplayProvider final : public Provider {
 public:
  explicit ReplayProvider(Cassette cassette) : cassette_(std::move(cassette)) {}
  static std::shared_ptr<ReplayProvider> open(const std::string& path);

  ProviderResponse complete(const ProviderRequest& request) override;
  std::string_view provenance() const override { return "replay"; }
  const Cassette& cassette() const noexcept { return cassette_; }

 private:
  const Cassette cassette_;
};

// Wraps another provider and appends every new (fingerprint -> response) pair,
// refusals included, to a cassette file.
class RecordingProvider final : public Provider {
 public:
  RecordingProvider(std::shared_ptr<Provider> inner, std::string path,
                    std::map<std::string, std::string> params = {});

  ProviderResponse complete(const ProviderRequest& request) override;
  std::string_view provenance() const override { return "record"; }
  std::size_t recorded() const;

 private:
  void append(const CassetteEntry& entry);

  std::shared_ptr<Provider> inner_;
  std::string path_;
  mutable std::mutex mutex_;
  std::set<std::string> seen_;
};

// Adapts a plain function; used by the C API to accept host-supplied backends.
class CallbackProvider final : public Provider {
 public:
  using Fn = std::function<ProviderResponse(const ProviderRequest&)>;
  CallbackProvider(Fn fn, std::string provenance)
      : fn_(std::move(fn)), provenance_(std::move(provenance)) {}

  ProviderResponse complete(const ProviderRequest& request) override;
  std::string_view provenance() const override { return provenance_; }

 private:
  Fn fn_;
  std::string provenance_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com
  std::string api_key;
  std::string model;
  std::string path = "/v1/chat/completions";
  int timeout_seconds = 120;

  // DIKE_LLM_BASE_URL, DIKE_LLM_API_KEY, DIKE_LLM_MODEL.
  static HttpBackendConfig from_env();
};

// OpenAI-compatible chat-completions client.
class HttpBackend final : public Provider {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  ProviderResponse complete(const ProviderRequest& request) override;
  std::string_view provenance() const override { return "live"; }

  // The message list sent for a request; exposed for tests.
  static std::string build_body(const ProviderRequest& request, const std::string& model);

 private:
  HttpBackendConfig config_;
};

}  // namespace dike
