#include "dike/serialize.hpp"

#include <string>

#include "dike/error.hpp"
#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& v) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    v.reset();
  } else {
    v = it->get<T>();
  }
}

}  // namespace

json parse_json(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, origin + ": " + e.what());
  }
}

void to_json(json& j, const EmotionProfile& p) {
  j = json{{"weights", p.weights()}, {"normalized", p.normalized()}};
}

void from_json(const json& j, EmotionProfile& p) {
  p = EmotionProfile::restore(j.at("weights").get<std::map<std::string, double>>(),
                              j.value("normalized", true));
}

void to_json(json& j, const BehaviorMatrix& m) {
  json rows = json::array();
  for (int l = 1; l <= m.levels(); ++l) {
    const auto& r = m.row(l);
    rows.push_back({{"level", l}, {"profile", r.profile}, {"support", r.support},
                    {"presence", r.presence}});
  }
  j = json{{"spectrum_id", m.spectrum_id()}, {"rows", rows}};
}

void from_json(const json& j, BehaviorMatrix& m) {
  std::vector<BehaviorMatrix::Row> rows;
  for (const auto& r : j.at("rows")) {
    BehaviorMatrix::Row row;
    row.profile = r.at("profile").get<EmotionProfile>();
    row.support = r.at("support").get<int>();
    row.presence = r.value("presence", std::map<std::string, int>{});
    rows.push_back(std::move(row));
  }
  m = BehaviorMatrix(j.at("spectrum_id").get<std::string>(), std::move(rows));
}

void to_json(json& j, const Rewrite& r) {
  j = json{{"source_doc", r.source_doc}, {"level", r.level}, {"text", r.text}};
}
void from_json(const json& j, Rewrite& r) {
  r.source_doc = j.at("source_doc").get<std::string>();
  r.level = j.at("level").get<int>();
  r.text = j.at("text").get<std::string>();
}
void to_json(json& j, const RewriteGap& g) {
  j = json{{"source_doc", g.source_doc}, {"level", g.level}, {"reason", g.reason}};
}
void from_json(const json& j, RewriteGap& g) {
  g.source_doc = j.at("source_doc").get<std::string>();
  g.level = j.at("level").get<int>();
  g.reason = j.value("reason", "");
}
void to_json(json& j, const RewriteSet& s) {
  j = json{{"spectrum_id", s.spectrum_id}, {"rewrites", s.rewrites}, {"gaps", s.gaps}};
}
void from_json(const json& j, RewriteSet& s) {
  s.spectrum_id = j.at("spectrum_id").get<std::string>();
  s.rewrites = j.at("rewrites").get<std::vector<Rewrite>>();
  s.gaps = j.value("gaps", std::vector<RewriteGap>{});
}

void to_json(json& j, const Classification& c) {
  json scores = json::object();
  for (const auto& [level, s] : c.scores) scores[std::to_string(level)] = s;
  j = json{{"level", c.level}, {"scores", scores}, {"profile", c.profile}};
}
void from_json(const json& j, Classification& c) {
  c.level = j.at("level").get<int>();
  c.scores.clear();
  for (const auto& [k, v] : j.at("scores").items()) c.scores[std::stoi(k)] = v.get<double>();
  c.profile = j.at("profile").get<EmotionProfile>();
}

void to_json(json& j, const EvaluationReport& r) {
  j = json{{"count", r.count},
           {"accuracy", r.accuracy},
           {"within_one_level_accuracy", r.within_one_level_accuracy},
           {"entropy", r.entropy},
           {"confusion", r.confusion}};
}
void from_json(const json& j, EvaluationReport& r) {
  r.count = j.at("count").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.within_one_level_accuracy = j.at("within_one_level_accuracy").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<int>>>();
}

void to_json(json& j, const Guardrail& g) {
  j = json{{"spectrum_id", g.spectrum_id},
           {"min_level", g.min_level},
           {"max_level", g.max_level},
           {"max_iters", g.max_iters}};
}
void from_json(const json& j, Guardrail& g) { g = Guardrail::from_json(j.dump()); }

void to_json(json& j, const Verdict& v) {
  j = json{{"status", to_string(v.status)}, {"level", v.level}, {"distance", v.distance}};
}
void from_json(const json& j, Verdict& v) {
  const auto status = j.at("status").get<std::string>();
  if (status == "compliant") {
    v.status = VerdictStatus::kCompliant;
  } else if (status == "violation") {
    v.status = VerdictStatus::kViolation;
  } else {
    throw Error(ErrorCode::kParseError, "unknown verdict status '" + status + "'", "$.status");
  }
  v.level = j.at("level").get<int>();
  v.distance = j.at("distance").get<int>();
}

void to_json(json& j, const AdjustmentPlan& p) {
  j = json{{"target_level", p.target_level}, {"delta", p.delta}, {"rationale", p.rationale}};
}
void from_json(const json& j, AdjustmentPlan& p) {
  p.target_level = j.at("target_level").get<int>();
  p.delta = j.at("delta").get<std::map<std::string, double>>();
  p.rationale = j.value("rationale", "");
}

void to_json(json& j, const RectificationResult& r) {
  j = json{{"final_doc", r.final_doc},
           {"iterations", r.iterations},
           {"verdicts", r.verdicts},
           {"converged", r.converged}};
  put_optional(j, "final_classification", r.final_classification);
  put_optional(j, "last_plan", r.last_plan);
}
void from_json(const json& j, RectificationResult& r) {
  r.final_doc = j.at("final_doc").get<std::string>();
  r.iterations = j.at("iterations").get<int>();
  r.verdicts = j.at("verdicts").get<std::vector<Verdict>>();
  r.converged = j.at("converged").get<bool>();
  get_optional(j, "final_classification", r.final_classification);
  get_optional(j, "last_plan", r.last_plan);
}

DebateVariant debate_variant_from_string(std::string_view s) {
  if (s == "dike_eris") return DebateVariant::kDikeEris;
  if (s == "socrasynth") return DebateVariant::kSocraSynth;
  throw Error(ErrorCode::kInvalidArgument, "unknown debate variant '" + std::string(s) + "'",
              "$.variant");
}

DebatePhase debate_phase_from_string(std::string_view s) {
  for (auto p : {DebatePhase::kInit, DebatePhase::kOpening, DebatePhase::kRounds,
                 DebatePhase::kConcluding, DebatePhase::kDone}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorCode::kParseError, "unknown debate phase '" + std::string(s) + "'", "$.phase");
}

Agent agent_from_string(std::string_view s) {
  for (auto a : {Agent::kDike, Agent::kEris, Agent::kConciliator}) {
    if (to_string(a) == s) return a;
  }
  throw Error(ErrorCode::kParseError, "unknown agent '" + std::string(s) + "'", "$.agent");
}

void to_json(json& j, const DebateConfig& c) {
  j = json{{"delta0", c.delta0},
           {"damping", c.damping},
           {"floor", c.floor},
           {"variant", to_string(c.variant)},
           {"crit_enabled", c.crit_enabled},
           {"tolerance_levels", c.tolerance_levels}};
}
void from_json(const json& j, DebateConfig& c) {
  DebateConfig d;
  c.delta0 = j.value("delta0", d.delta0);
  c.damping = j.value("damping", d.damping);
  c.floor = j.value("floor", d.floor);
  c.variant = debate_variant_from_string(j.value("variant", std::string(to_string(d.variant))));
  c.crit_enabled = j.value("crit_enabled", d.crit_enabled);
  c.tolerance_levels = j.value("tolerance_levels", d.tolerance_levels);
  c.validate();
}

void to_json(json& j, const Argument& a) {
  j = json{{"agent", to_string(a.agent)},
           {"phase", to_string(a.phase)},
           {"round", a.round},
           {"delta", a.delta},
           {"text", a.text}};
}
void from_json(const json& j, Argument& a) {
  a.agent = agent_from_string(j.at("agent").get<std::string>());
  a.phase = debate_phase_from_string(j.at("phase").get<std::string>());
  a.round = j.at("round").get<int>();
  a.delta = j.at("delta").get<double>();
  a.text = j.at("text").get<std::string>();
}

void to_json(json& j, const Consensus& c) {
  j = json{{"joint_statement", c.joint_statement},
           {"dike_final_level", c.dike_final_level},
           {"eris_final_level", c.eris_final_level}};
}
void from_json(const json& j, Consensus& c) {
  c.joint_statement = j.at("joint_statement").get<std::string>();
  c.dike_final_level = j.at("dike_final_level").get<int>();
  c.eris_final_level = j.at("eris_final_level").get<int>();
}

void to_json(json& j, const DebateOutcome& o) {
  j = json{{"transcript", o.transcript},
           {"conciliator_reply", o.conciliator_reply},
           {"escalated", o.escalated}};
  put_optional(j, "consensus", o.consensus);
  put_optional(j, "feedback_ref", o.feedback_ref);
}
void from_json(const json& j, DebateOutcome& o) {
  o.transcript = j.at("transcript").get<std::vector<Argument>>();
  o.conciliator_reply = j.value("conciliator_reply", "");
  o.escalated = j.at("escalated").get<bool>();
  get_optional(j, "consensus", o.consensus);
  get_optional(j, "feedback_ref", o.feedback_ref);
}

json transcript_json(const DebateState& state, const DebateOutcome& outcome,
                     const BehaviorSpectrum& spectrum) {
  auto level_json = [&](int level) {
    const auto& l = spectrum.level(level);
    return json{{"index", l.index}, {"label", l.label}, {"scalar", l.scalar}};
  };
  json entries = json::array();
  for (const auto& a : outcome.transcript) entries.push_back(a);
  json out = {{"config", state.config},
              {"schedule", contentiousness_schedule(state.config)},
              {"document", state.document},
              {"decision", state.decision},
              {"dike_level", level_json(state.dike_level)},
              {"eris_level", level_json(state.eris_level)},
              {"subtopics", state.subtopics},
              {"dike_stance", state.dike_stance},
              {"eris_stance", state.eris_stance},
              {"rounds", state.round},
              {"entries", entries},
              {"outcome", outcome}};
  if (state.quality) out["quality"] = {state.quality->first, state.quality->second};
  return out;
}

}  // namespace dike
