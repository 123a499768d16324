#pragma once

// JSON forms of the module types, found by nlohmann::json through ADL.

#include <json.hpp>

#include "dike/behavior.hpp"
#include "dike/debate.hpp"
#include "dike/guardrail.hpp"

namespace dike {

void to_json(nlohmann::json& j, const EmotionProfile& p);
void from_json(const nlohmann::json& j, EmotionProfile& p);

void to_json(nlohmann::json& j, const BehaviorMatrix& m);
void from_json(const nlohmann::json& j, BehaviorMatrix& m);

void to_json(nlohmann::json& j, const Rewrite& r);
void from_json(const nlohmann::json& j, Rewrite& r);
void to_json(nlohmann::json& j, const RewriteGap& g);
void from_json(const nlohmann::json& j, RewriteGap& g);
void to_json(nlohmann::json& j, const RewriteSet& s);
void from_json(const nlohmann::json& j, RewriteSet& s);

// scores keyed by the level index as a string
void to_json(nlohmann::json& j, const Classification& c);
void from_json(const nlohmann::json& j, Classification& c);

void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

void to_json(nlohmann::json& j, const Guardrail& g);
void from_json(const nlohmann::json& j, Guardrail& g);
void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const AdjustmentPlan& p);
void from_json(const nlohmann::json& j, AdjustmentPlan& p);
void to_json(nlohmann::json& j, const RectificationResult& r);
void from_json(const nlohmann::json& j, RectificationResult& r);

void to_json(nlohmann::json& j, const DebateConfig& c);
void from_json(const nlohmann::json& j, DebateConfig& c);
void to_json(nlohmann::json& j, const Argument& a);
void from_json(const nlohmann::json& j, Argument& a);
void to_json(nlohmann::json& j, const Consensus& c);
void from_json(const nlohmann::json& j, Consensus& c);
void to_json(nlohmann::json& j, const DebateOutcome& o);
void from_json(const nlohmann::json& j, DebateOutcome& o);

DebateVariant debate_variant_from_string(std::string_view s);
DebatePhase debate_phase_from_string(std::string_view s);
Agent agent_from_string(std::string_view s);

// Full record of one debate, as served to reviewers:
// {config, schedule, decision, dike_level, eris_level, subtopics, stances,
//  entries[{agent, phase, round, delta, text}], outcome}
nlohmann::json transcript_json(const DebateState& state, const DebateOutcome& outcome,
                               const BehaviorSpectrum& spectrum);

// Reads a JSON value; json errors become Error{kParseError} naming origin.
nlohmann::json parse_json(std::string_view text, const std::string& origin);

}  // namespace dike
