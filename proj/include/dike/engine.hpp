#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dike/behavior.hpp"
#include "dike/debate.hpp"
#include "dike/guardrail.hpp"
#include "dike/provider.hpp"
#include "dike/store.hpp"

namespace dike {

enum class ProviderMode { kLive, kReplay, kRecord };
std::string_view to_string(ProviderMode mode);
ProviderMode provider_mode_from_string(std::string_view s);

struct ServiceConfig {
  int port = 8080;
  std::string data_dir = "dike-data";
  ProviderMode provider_mode = ProviderMode::kReplay;
  std::string cassette_path;
  Guardrail policy;
  DebateConfig debate;
  int top_m = 5;
  std::size_t max_in_flight = 4;
  bool feature_hints = false;
  // Empty disables the bearer-token check.
  std::string api_token;

  // replay/record need a cassette; Error{kConfig} otherwise.
  void validate() const;
  // Overlay DIKE_* environment variables (DATA_DIR, PROVIDER, CASSETTE, PORT,
  // API_TOKEN, POLICY, DEBATE_CONFIG) on top of the defaults.
  static ServiceConfig from_env();
};

void to_json(nlohmann::json& j, const ServiceConfig& c);

struct TrainReport {
  std::size_t documents = 0;
  RewriteSet rewrites;
  std::vector<RewriteGap> analysis_gaps;  // rewrites the analyst declined
  BehaviorMatrix matrix;
};

struct GuardResult {
  Classification classification;
  Verdict verdict;
  std::optional<AdjustmentPlan> plan;  // only on violation
};

struct DebateRequest {
  std::string text;
  std::string doc_id;
  // Machine verdicts; classified / zero-shot when absent.
  std::optional<int> dike_level;
  std::optional<int> eris_level;
  std::optional<DebateConfig> config;
};

struct DebateRun {
  int dike_level = 0;
  int eris_level = 0;
  DebateOutcome outcome;
  nlohmann::json transcript;
  std::string transcript_ref;
  std::optional<ReviewCase> review_case;
};

// The wired pipeline: provider + store + bundled spectra. Thread-safe.
class Engine {
 public:
  // `backend` stands in for the live HTTP client (live and record modes);
  // replay always reads the cassette.
  explicit Engine(ServiceConfig config, std::shared_ptr<Provider> backend = nullptr,
                  std::shared_ptr<CritScorer> crit = nullptr);

  const ServiceConfig& config() const noexcept { return config_; }
  const BehaviorSpectrum& spectrum() const noexcept { return *spectrum_; }
  Store& store() noexcept { return store_; }
  Provider& provider() noexcept { return *provider_; }

  DocumentSet ingest(const std::string& path, IngestFormat format, std::vector<std::string>* warnings);
  // Uses the stored documents when `docs` is empty.
  TrainReport train(DocumentSet docs = {}, std::optional<int> top_m = std::nullopt);
  bool ready() const;
  BehaviorMatrix matrix() const;  // Error{kNotReady} before training

  Classification classify(std::string_view text);
  GuardResult guard(std::string_view text, const std::optional<Guardrail>& policy = std::nullopt);
  RectificationResult rectify(std::string_view text, const std::optional<Guardrail>& policy = std::nullopt,
                              std::optional<int> max_iters = std::nullopt);
  int zero_shot(std::string_view text, const DebateConfig& config);
  DebateRun debate(const DebateRequest& request);

  // JSON adapter behind the C API, CLI and HTTP service, so every entry path
  // produces the same bytes. Ops: ingest, train, classify, guard, rectify,
  // debate, schedule, reviews.list, reviews.get, reviews.decide, matrix,
  // spectra, heatmap, ground_truth, eval, status.
  nlohmann::json handle(std::string_view op, const nlohmann::json& request);
  // error_json plus provenance for provider-side failures.
  nlohmann::json describe_error(const Error& e) const;

 private:
  std::vector<RankedEmotion> analyse(std::string_view text, int top_m);

  ServiceConfig config_;
  const BehaviorSpectrum* spectrum_;
  EmotionVocabulary vocabulary_;
  Store store_;
  std::shared_ptr<Provider> provider_;
  std::shared_ptr<CritScorer> crit_;
  mutable std::mutex matrix_mutex_;
  mutable std::optional<BehaviorMatrix> matrix_;
  std::mutex train_mutex_;
};

// Ops that need no engine: "spectra" and "schedule".
std::optional<nlohmann::json> handle_stateless(std::string_view op, const nlohmann::json& request,
                                               const DebateConfig& base = {});

// {"error": {"code", "message", "field"?, "provenance"?}}
nlohmann::json error_json(const Error& e, std::string_view provenance = {});

}  // namespace dike
