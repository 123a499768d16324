#include "dike/engine.hpp"

#include <cstdlib>
#include <filesystem>

#include "dike/emotion.hpp"
#include "dike/parallel.hpp"
#include "dike/serialize.hpp"
#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

std::string_view to_string(ProviderMode mode) {
  switch (mode) {
    case ProviderMode::kLive: return "live";
    case ProviderMode::kReplay: return "replay";
    case ProviderMode::kRecord: return "record";
  }
  return "?";
}

ProviderMode provider_mode_from_string(std::string_view s) {
  if (s == "live") return ProviderMode::kLive;
  if (s == "replay") return ProviderMode::kReplay;
  if (s == "record") return ProviderMode::kRecord;
  throw Error(ErrorCode::kConfig, "provider must be live, replay or record", "provider");
}

void ServiceConfig::validate() const {
  if (provider_mode != ProviderMode::kLive && cassette_path.empty()) {
    throw Error(ErrorCode::kConfig,
                std::string(to_string(provider_mode)) + " mode needs a cassette path", "cassette");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kConfig, "port out of range", "port");
  if (top_m < 1) throw Error(ErrorCode::kConfig, "top_m must be >= 1", "top_m");
  if (data_dir.empty()) throw Error(ErrorCode::kConfig, "data_dir is empty", "data_dir");
  debate.validate();
}

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("DIKE_DATA_DIR")) c.data_dir = *v;
  if (auto v = env("DIKE_PROVIDER")) c.provider_mode = provider_mode_from_string(*v);
  if (auto v = env("DIKE_CASSETTE")) c.cassette_path = *v;
  if (auto v = env("DIKE_API_TOKEN")) c.api_token = *v;
  if (auto v = env("DIKE_PORT")) {
    try {
      c.port = std::stoi(*v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "DIKE_PORT is not a number", "DIKE_PORT");
    }
  }
  if (auto v = env("DIKE_POLICY")) c.policy = Guardrail::from_json(text::read_file(*v));
  if (auto v = env("DIKE_DEBATE_CONFIG")) {
    c.debate = parse_json(text::read_file(*v), *v).get<DebateConfig>();
  }
  return c;
}

void to_json(json& j, const ServiceConfig& c) {
  j = json{{"port", c.port},
           {"data_dir", c.data_dir},
           {"provider_mode", to_string(c.provider_mode)},
           {"cassette_path", c.cassette_path},
           {"policy", c.policy},
           {"debate", c.debate},
           {"top_m", c.top_m},
           {"feature_hints", c.feature_hints},
           {"auth", !c.api_token.empty()}};
}

json error_json(const Error& e, std::string_view provenance) {
  json err = {{"code", to_string(e.code())},
              {"status", static_cast<int>(e.code())},
              {"message", e.what()}};
  if (!e.field().empty()) err["field"] = e.field();
  if (!provenance.empty()) err["provenance"] = provenance;
  if (const auto* r = dynamic_cast<const RefusalError*>(&e)) err["fingerprint"] = r->fingerprint();
  return json{{"error", err}};
}

namespace {

std::shared_ptr<Provider> make_provider(const ServiceConfig& config, std::shared_ptr<Provider> backend) {
  switch (config.provider_mode) {
    case ProviderMode::kReplay:
      return ReplayProvider::open(config.cassette_path);
    case ProviderMode::kRecord:
      if (!backend) backend = std::make_shared<HttpBackend>(HttpBackendConfig::from_env());
      return std::make_shared<RecordingProvider>(backend, config.cassette_path);
    case ProviderMode::kLive:
      if (!backend) backend = std::make_shared<HttpBackend>(HttpBackendConfig::from_env());
      return backend;
  }
  throw Error(ErrorCode::kConfig, "unknown provider mode");
}

bool provider_side(ErrorCode c) {
  return c == ErrorCode::kRefusal || c == ErrorCode::kMissingFixture ||
         c == ErrorCode::kBackendUnavailable || c == ErrorCode::kCassetteCorrupt;
}

std::string excerpt(std::string_view text, std::size_t n = 160) {
  auto flat = text::normalize_whitespace(text);
  if (flat.size() <= n) return flat;
  auto cut = flat.rfind(' ', n);
  if (cut == std::string::npos || cut < n / 2) cut = n;
  return flat.substr(0, cut) + "...";
}

}  // namespace

Engine::Engine(ServiceConfig config, std::shared_ptr<Provider> backend, std::shared_ptr<CritScorer> crit)
    : config_((config.validate(), std::move(config))),
      spectrum_(&BehaviorSpectrum::bundled()),
      vocabulary_(SpectrumLibrary::bundled(), BehaviorSpectrum::bundled()),
      store_(config_.data_dir),
      provider_(make_provider(config_, std::move(backend))),
      crit_(std::move(crit)) {
  config_.policy.validate(spectrum_->size());
}

json Engine::describe_error(const Error& e) const {
  return error_json(e, provider_side(e.code()) ? provider_->provenance() : std::string_view{});
}

DocumentSet Engine::ingest(const std::string& path, IngestFormat format, std::vector<std::string>* warnings) {
  auto docs = dike::ingest(path, format, warnings);
  store_.save_documents(docs);
  return docs;
}

std::vector<RankedEmotion> Engine::analyse(std::string_view text, int top_m) {
  return extract_emotions(text, top_m, *provider_, vocabulary_);
}

TrainReport Engine::train(DocumentSet docs, std::optional<int> top_m) {
  std::lock_guard guard(train_mutex_);
  if (docs.empty()) docs = store_.load_documents();
  const int m = top_m.value_or(config_.top_m);
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "top_m must be >= 1", "$.top_m");
  // Recording keeps one call in flight so cassettes come out in a stable order.
  const std::size_t in_flight = config_.provider_mode == ProviderMode::kRecord ? 1 : config_.max_in_flight;

  TrainReport report;
  report.documents = docs.size();
  report.rewrites = generate_training_corpus(docs, *spectrum_, *provider_, {in_flight});

  const auto& rw = report.rewrites.rewrites;
  std::vector<std::optional<EmotionProfile>> profiles(rw.size());
  std::vector<std::string> why(rw.size());
  parallel_for(rw.size(), in_flight, [&](std::size_t i) {
    try {
      profiles[i] = profile_of(analyse(rw[i].text, m));
    } catch (const RefusalError& e) {
      why[i] = e.what();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyInput) throw;
      why[i] = "no emotions found";
    }
  });

  RewriteSet profiled;
  profiled.spectrum_id = report.rewrites.spectrum_id;
  std::vector<EmotionProfile> kept;
  for (std::size_t i = 0; i < rw.size(); ++i) {
    if (profiles[i]) {
      profiled.rewrites.push_back(rw[i]);
      kept.push_back(*profiles[i]);
    } else {
      report.analysis_gaps.push_back({rw[i].source_doc, rw[i].level, why[i]});
    }
  }
  report.matrix = build_matrix(profiled, kept, spectrum_->size());
  store_.save_rewrites(report.rewrites);
  store_.save_matrix(report.matrix);
  {
    std::lock_guard g(matrix_mutex_);
    matrix_ = report.matrix;
  }
  return report;
}

bool Engine::ready() const {
  std::lock_guard g(matrix_mutex_);
  return matrix_.has_value() || store_.has_matrix();
}

BehaviorMatrix Engine::matrix() const {
  std::lock_guard g(matrix_mutex_);
  if (!matrix_) {
    if (!store_.has_matrix()) {
      throw Error(ErrorCode::kNotReady, "no behavior matrix yet; run train first");
    }
    matrix_ = store_.load_matrix();
  }
  return *matrix_;
}

Classification Engine::classify(std::string_view text) {
  const auto m = matrix();
  if (text::trim(text).empty()) throw Error(ErrorCode::kEmptyInput, "text is empty", "$.text");
  return dike::classify(profile_of(analyse(text, config_.top_m)), m, *spectrum_);
}

GuardResult Engine::guard(std::string_view text, const std::optional<Guardrail>& policy) {
  const Guardrail g = policy.value_or(config_.policy);
  g.validate(spectrum_->size());
  GuardResult out;
  out.classification = classify(text);
  out.verdict = check(out.classification.level, g, spectrum_->size());
  if (!out.verdict.compliant()) out.plan = plan_adjustment(out.classification, matrix(), g, *spectrum_);
  return out;
}

RectificationResult Engine::rectify(std::string_view text, const std::optional<Guardrail>& policy,
                                    std::optional<int> max_iters) {
  Guardrail g = policy.value_or(config_.policy);
  if (max_iters) g.max_iters = *max_iters;
  g.validate(spectrum_->size());
  const auto initial = classify(text);
  RectifyOptions opts;
  opts.max_iters = g.max_iters;
  opts.top_m = config_.top_m;
  opts.feature_hints = config_.feature_hints;
  return dike::rectify(text, initial, matrix(), g, *spectrum_, vocabulary_, *provider_, opts);
}

int Engine::zero_shot(std::string_view text, const DebateConfig& config) {
  return parse_zero_shot_level(provider_->complete(zero_shot_request(text, *spectrum_, config)).text,
                               *spectrum_);
}

DebateRun Engine::debate(const DebateRequest& request) {
  const DebateConfig config = request.config.value_or(config_.debate);
  config.validate();

  std::string text = request.text;
  std::string doc_id = request.doc_id;
  if (text.empty() && !doc_id.empty()) {
    for (const auto& d : store_.load_documents()) {
      if (d.id == doc_id) text = d.text;
    }
    if (text.empty()) throw Error(ErrorCode::kNotFound, "no document '" + doc_id + "'", "$.doc_id");
  }
  if (text::trim(text).empty()) throw Error(ErrorCode::kEmptyInput, "text is empty", "$.text");
  if (doc_id.empty()) doc_id = document_id(text);

  DebateRun run;
  run.dike_level = request.dike_level ? *request.dike_level : classify(text).level;
  run.eris_level = request.eris_level ? *request.eris_level : zero_shot(text, config);
  spectrum_->level(run.dike_level);
  spectrum_->level(run.eris_level);

  DebateParticipants who;
  who.dike = who.eris = who.conciliator = provider_.get();
  who.crit = crit_.get();
  who.parallel_rebuttals = config_.provider_mode != ProviderMode::kRecord;

  DebateState state;
  run.outcome = run_debate({text, run.dike_level, run.eris_level}, *spectrum_, config, who, &state);

  // Ids come from the content so replays land on the same files.
  const std::string digest = text::sha256_hex(transcript_json(state, run.outcome, *spectrum_).dump()).substr(0, 12);
  const std::string id = (run.outcome.escalated ? "case-" : "debate-") + digest;
  if (run.outcome.escalated) run.outcome.feedback_ref = id;
  run.transcript = transcript_json(state, run.outcome, *spectrum_);
  run.transcript["doc_id"] = doc_id;
  run.transcript_ref = store_.save_transcript(id, run.transcript);

  if (run.outcome.escalated) {
    ReviewCase c;
    c.id = id;
    c.doc_id = doc_id;
    c.doc_excerpt = excerpt(text);
    c.dike_level = run.dike_level;
    c.eris_level = run.eris_level;
    c.transcript_ref = run.transcript_ref;
    c.opened_at = utc_now_iso8601();
    try {
      store_.create_case(c);
      run.review_case = c;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kConflict) throw;
      run.review_case = store_.get_case(id);  // same debate replayed
    }
  }
  return run;
}

// --- JSON adapter ------------------------------------------------------------

namespace {

std::string path_of(const char* key) { return std::string("$.") + key; }

const json* find(const json& req, const char* key) {
  if (!req.is_object()) return nullptr;
  auto it = req.find(key);
  return it == req.end() || it->is_null() ? nullptr : &*it;
}

std::string need_string(const json& req, const char* key) {
  const json* v = find(req, key);
  if (v == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " is required", path_of(key));
  if (!v->is_string()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " must be a string", path_of(key));
  return v->get<std::string>();
}

std::optional<std::string> opt_string(const json& req, const char* key) {
  if (find(req, key) == nullptr) return std::nullopt;
  return need_string(req, key);
}

std::optional<int> opt_int(const json& req, const char* key) {
  const json* v = find(req, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_number_integer()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " must be an integer", path_of(key));
  return v->get<int>();
}

// Level given as an index or a label/alias.
std::optional<int> opt_level(const json& req, const char* key, const BehaviorSpectrum& spectrum) {
  const json* v = find(req, key);
  if (v == nullptr) return std::nullopt;
  try {
    if (v->is_number_integer()) {
      spectrum.level(v->get<int>());
      return v->get<int>();
    }
    if (v->is_string()) return spectrum.parse_level(v->get<std::string>());
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path_of(key));
  }
  throw Error(ErrorCode::kInvalidArgument, std::string(key) + " must be a level index or label", path_of(key));
}

std::optional<Guardrail> opt_policy(const json& req, const Guardrail& base) {
  const json* v = find(req, "policy");
  if (v == nullptr) return std::nullopt;
  if (v->is_string()) return Guardrail::from_range(v->get<std::string>(), base);
  if (v->is_object()) {
    json merged = base;
    merged.merge_patch(*v);
    return Guardrail::from_json(merged.dump());
  }
  throw Error(ErrorCode::kInvalidArgument, "policy must be \"MIN:MAX\" or an object", "$.policy");
}

std::optional<DebateConfig> opt_debate_config(const json& req, const DebateConfig& base) {
  const json* v = find(req, "config");
  if (v == nullptr) return std::nullopt;
  if (!v->is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be an object", "$.config");
  json merged = base;
  merged.merge_patch(*v);
  try {
    return merged.get<DebateConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, e.what(), "$.config");
  }
}

json classification_json(const Classification& c, const BehaviorSpectrum& spectrum) {
  json j = c;
  j["label"] = spectrum.level(c.level).label;
  return j;
}

// Predictions / truth may be inline arrays or files: JSON array, JSON lines,
// or (truth only) an annotation CSV merged on the spot.
json load_records(const json& v, const char* key) {
  if (v.is_array()) return v;
  if (!v.is_string()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " must be a path or an array", path_of(key));
  const std::string path = v.get<std::string>();
  const std::string content = text::read_file(path);
  try {
    auto doc = json::parse(content);
    if (doc.is_array()) return doc;
    if (doc.is_object()) return doc.contains("data") ? doc["data"] : json::array({doc});
  } catch (const json::exception&) {
  }
  const auto lines = text::split_lines(content);
  json out = json::array();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = text::trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() != '{') return json(nullptr);  // not JSON lines; caller may try CSV
    out.push_back(parse_json(line, path + ":" + std::to_string(i + 1)));
  }
  return out;
}

}  // namespace

std::optional<json> handle_stateless(std::string_view op, const json& req, const DebateConfig& base) {
  if (op == "spectra") {
    return json{{"behaviors", json::parse(BehaviorSpectrum::bundled().to_json())},
                {"emotions", json::parse(SpectrumLibrary::bundled().to_json())}};
  }
  if (op == "schedule") {
    const auto cfg = opt_debate_config(req, base).value_or(base);
    const auto s = contentiousness_schedule(cfg);
    return json{{"config", cfg}, {"rounds", s.size()}, {"schedule", s}};
  }
  return std::nullopt;
}

json Engine::handle(std::string_view op, const json& req) {
  if (!req.is_object() && !req.is_null()) throw Error(ErrorCode::kInvalidArgument, "request must be a JSON object", "$");

  if (op == "status") {
    return {{"ready", ready()}, {"provider", provider_->provenance()}, {"config", config_}};
  }
  if (auto out = handle_stateless(op, req, config_.debate)) return *out;
  if (op == "matrix") return matrix();
  if (op == "heatmap") return {{"csv", heatmap_csv(matrix(), *spectrum_)}};
  if (op == "ingest") {
    const auto input = need_string(req, "input");
    const auto format = ingest_format_from_string(opt_string(req, "format").value_or("jsonl"));
    std::vector<std::string> warnings;
    const auto docs = ingest(input, format, &warnings);
    json ids = json::array();
    for (const auto& d : docs) ids.push_back(d.id);
    return {{"count", docs.size()}, {"ids", ids}, {"warnings", warnings}};
  }
  if (op == "train") {
    DocumentSet docs;
    if (auto input = opt_string(req, "input")) {
      std::vector<std::string> warnings;
      docs = ingest(*input, ingest_format_from_string(opt_string(req, "format").value_or("jsonl")), &warnings);
    }
    const auto r = train(std::move(docs), opt_int(req, "top_m"));
    json support = json::array();
    for (const auto& row : r.matrix.rows()) support.push_back(row.support);
    return {{"documents", r.documents},
            {"rewrites", r.rewrites.rewrites.size()},
            {"gaps", r.rewrites.gaps},
            {"analysis_gaps", r.analysis_gaps},
            {"support", support},
            {"matrix", r.matrix}};
  }
  if (op == "classify") return classification_json(classify(need_string(req, "text")), *spectrum_);
  if (op == "guard") {
    const auto r = guard(need_string(req, "text"), opt_policy(req, config_.policy));
    json out = {{"classification", classification_json(r.classification, *spectrum_)}, {"verdict", r.verdict}};
    if (r.plan) out["plan"] = *r.plan;
    return out;
  }
  if (op == "rectify") {
    return rectify(need_string(req, "text"), opt_policy(req, config_.policy), opt_int(req, "max_iters"));
  }
  if (op == "debate") {
    DebateRequest d;
    d.text = opt_string(req, "text").value_or("");
    d.doc_id = opt_string(req, "doc_id").value_or("");
    if (auto case_id = opt_string(req, "case_id")) {
      const auto c = store_.get_case(*case_id);
      d.text = store_.load_transcript(c.transcript_ref).value("document", "");
      d.doc_id = c.doc_id;
    }
    if (d.text.empty() && d.doc_id.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "one of text, doc_id or case_id is required", "$.text");
    }
    d.dike_level = opt_level(req, "dike_level", *spectrum_);
    d.eris_level = opt_level(req, "eris_level", *spectrum_);
    d.config = opt_debate_config(req, config_.debate);
    const auto run = debate(d);
    json out = run.outcome;
    out["dike_level"] = run.dike_level;
    out["eris_level"] = run.eris_level;
    out["transcript_ref"] = run.transcript_ref;
    out["review_case"] = run.review_case ? json(*run.review_case) : json(nullptr);
    return out;
  }
  if (op == "reviews.list") {
    std::optional<CaseStatus> status;
    if (auto s = opt_string(req, "status"); s && !s->empty()) {
      try {
        status = case_status_from_string(*s);
      } catch (const Error& e) {
        throw Error(e.code(), e.what(), "$.status");
      }
    }
    return json(store_.list_cases(status));
  }
  if (op == "reviews.get") {
    const auto c = store_.get_case(need_string(req, "id"));
    return {{"case", c}, {"transcript", store_.load_transcript(c.transcript_ref)}};
  }
  if (op == "reviews.decide") {
    const auto id = need_string(req, "id");
    const auto level = opt_level(req, "level", *spectrum_);
    if (!level) throw Error(ErrorCode::kInvalidArgument, "level is required", "$.level");
    const auto rationale = opt_string(req, "rationale").value_or("");
    return store_.decide(id, *level, rationale, *spectrum_);
  }
  if (op == "ground_truth") {
    const auto path = need_string(req, "annotations");
    const auto min_sources = opt_int(req, "min_sources").value_or(1);
    if (min_sources < 1) throw Error(ErrorCode::kInvalidArgument, "min_sources must be >= 1", "$.min_sources");
    const auto anns = load_annotations_csv(path, *spectrum_);
    const auto truth = merge_all(anns, *spectrum_, static_cast<std::size_t>(min_sources));
    store_.save_ground_truth(truth);
    return json(truth);
  }
  if (op == "eval") {
    const json* pv = find(req, "predictions");
    const json* tv = find(req, "truth");
    if (pv == nullptr) throw Error(ErrorCode::kInvalidArgument, "predictions is required", "$.predictions");
    if (tv == nullptr) throw Error(ErrorCode::kInvalidArgument, "truth is required", "$.truth");

    std::map<std::string, int> predicted;
    const json preds = load_records(*pv, "predictions");
    if (!preds.is_array()) throw Error(ErrorCode::kParseError, "predictions must be JSON", "$.predictions");
    for (const auto& p : preds) {
      const auto level = opt_level(p, "level", *spectrum_);
      if (!p.contains("doc_id") || !p["doc_id"].is_string() || !level) throw Error(ErrorCode::kParseError, "prediction needs doc_id and level", "$.predictions");
      predicted[p["doc_id"].get<std::string>()] = *level;
    }

    std::vector<GroundTruth> truth;
    json tj = load_records(*tv, "truth");
    if (tj.is_null()) {
      truth = merge_all(load_annotations_csv(tv->get<std::string>(), *spectrum_), *spectrum_);
    } else {
      for (const auto& t : tj) {
        const auto level = opt_level(t, "level", *spectrum_);
        if (!t.is_object() || !t.contains("doc_id") || !t["doc_id"].is_string() || !level) {
          throw Error(ErrorCode::kParseError, "truth record needs doc_id and level", "$.truth");
        }
        GroundTruth g;
        g.doc_id = t["doc_id"].get<std::string>();
        g.level = *level;
        g.accepted = !t.contains("accepted") || t["accepted"] == true;
        truth.push_back(g);
      }
    }

    std::vector<int> p, t;
    json missing = json::array();
    std::size_t rejected = 0;
    for (const auto& g : truth) {
      if (!g.accepted) {
        ++rejected;
        continue;
      }
      auto it = predicted.find(g.doc_id);
      if (it == predicted.end()) {
        missing.push_back(g.doc_id);
        continue;
      }
      p.push_back(it->second);
      t.push_back(g.level);
    }
    json out = evaluate(p, t, spectrum_->size());
    out["rejected_truth"] = rejected;
    out["unpredicted"] = missing;
    return out;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown operation '" + std::string(op) + "'", "op");
}

}  // namespace dike
