#include "dike/debate.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include <json.hpp>

#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

namespace {

// Schedules like 0.9/3/3 land one ulp under the floor; treat those as reaching it.
constexpr double kFloorSlack = 1e-12;

bool reaches_floor(double delta, double floor) {
  return delta >= floor * (1.0 - kFloorSlack);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string level_phrase(const BehaviorSpectrum& spectrum, int level) {
  const auto& l = spectrum.level(level);
  return "'" + l.label + "' (level " + std::to_string(l.index) + " of " +
         std::to_string(spectrum.size()) + ", scalar " + fixed4(l.scalar) + ")";
}

std::vector<std::string> texts(const std::vector<Argument>& args) {
  std::vector<std::string> out;
  out.reserve(args.size());
  for (const auto& a : args) out.push_back(a.text);
  return out;
}

std::vector<std::string> parse_subtopics(std::string_view reply) {
  std::vector<std::string> out;
  for (auto line : text::split_lines(reply)) {
    std::string s = text::trim(line);
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s.erase(0, i + 1);
    s = text::trim(s);
    while (!s.empty() && (s.front() == '-' || s.front() == '*')) s.erase(0, 1);
    s = text::trim(s);
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

ProviderRequest agent_request(const DebateState& state, Agent agent, DebatePhase phase,
                              std::vector<std::string> context) {
  ProviderRequest req;
  req.role = agent == Agent::kDike ? Role::kDikeAgent : Role::kEris;
  req.stance = agent == Agent::kDike ? state.dike_stance : state.eris_stance;
  req.contentiousness = state.delta;
  std::ostringstream p;
  p << "defend your stance with conditions: S & Δ\n"
    << "S: " << *req.stance << '\n'
    << "Decision under review: " << state.decision << '\n';
  if (!state.subtopics.empty()) {
    p << "Subtopics:\n";
    for (const auto& t : state.subtopics) p << "- " << t << '\n';
  }
  p << "Δ (contentiousness): " << fixed4(state.delta) << '\n';
  switch (phase) {
    case DebatePhase::kOpening:
      p << "Phase: opening remarks\n";
      break;
    case DebatePhase::kRounds:
      p << "Phase: rebuttal, round " << state.round
        << ". Answer the opponent's latest arguments given as context.\n";
      break;
    default:
      p << "Phase: concluding remarks. Summarize your position given the whole debate.\n";
      break;
  }
  p << "Document:\n" << state.document;
  req.prompt = p.str();
  req.context = std::move(context);
  return req;
}

Argument ask(Provider* provider, const DebateState& state, Agent agent, DebatePhase phase,
             std::vector<std::string> context) {
  auto req = agent_request(state, agent, phase, std::move(context));
  Argument arg;
  arg.agent = agent;
  arg.phase = phase;
  arg.round = state.round;
  arg.delta = state.delta;
  arg.text = provider->complete(req).text;
  return arg;
}

void record(DebateState& state, Argument arg) {
  state.transcript.push_back(arg);
  (arg.agent == Agent::kDike ? state.theta_plus : state.theta_minus).push_back(std::move(arg));
}

void require(const DebateParticipants& p) {
  if (!p.dike || !p.eris || !p.conciliator) {
    throw Error(ErrorCode::kConfig, "debate needs DIKE, ERIS and conciliator providers");
  }
}

void expect_phase(const DebateState& state, DebatePhase phase) {
  if (state.phase != phase) {
    throw Error(ErrorCode::kInvalidArgument, std::string("debate is in phase ") +
                                                 std::string(to_string(state.phase)) +
                                                 ", expected " + std::string(to_string(phase)),
                "$.phase");
  }
}

int level_from_json(const json& v, const BehaviorSpectrum& spectrum) {
  if (v.is_number_integer()) return spectrum.level(v.get<int>()).index;
  if (v.is_string()) return spectrum.parse_level(v.get<std::string>());
  throw Error(ErrorCode::kParseError, "level must be a label or an index");
}

}  // namespace

std::string_view to_string(DebateVariant variant) {
  return variant == DebateVariant::kDikeEris ? "dike_eris" : "socrasynth";
}

std::string_view to_string(DebatePhase phase) {
  switch (phase) {
    case DebatePhase::kInit: return "init";
    case DebatePhase::kOpening: return "opening";
    case DebatePhase::kRounds: return "rounds";
    case DebatePhase::kConcluding: return "concluding";
    case DebatePhase::kDone: return "done";
  }
  return "?";
}

std::string_view to_string(Agent agent) {
  switch (agent) {
    case Agent::kDike: return "dike";
    case Agent::kEris: return "eris";
    case Agent::kConciliator: return "conciliator";
  }
  return "?";
}

void DebateConfig::validate() const {
  if (!(delta0 > 0.0 && delta0 <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "delta0 must lie in (0, 1]", "$.delta0");
  }
  if (!(damping > 1.0) || !std::isfinite(damping)) {
    throw Error(ErrorCode::kInvalidArgument, "damping must be > 1", "$.damping");
  }
  if (!(floor > 0.0 && floor < delta0)) {
    throw Error(ErrorCode::kInvalidArgument, "floor must lie in (0, delta0)", "$.floor");
  }
  if (tolerance_levels < 0) {
    throw Error(ErrorCode::kInvalidArgument, "tolerance must be >= 0", "$.tolerance_levels");
  }
}

std::vector<double> contentiousness_schedule(const DebateConfig& config) {
  config.validate();
  std::vector<double> out;
  for (double d = config.delta0 / config.damping; reaches_floor(d, config.floor);
       d /= config.damping) {
    out.push_back(d);
  }
  return out;
}

bool needs_escalation(const std::optional<Consensus>& consensus, int tolerance) {
  if (!consensus) return true;
  return std::abs(consensus->dike_final_level - consensus->eris_final_level) > tolerance;
}

DebateState init_debate(const DebateInput& input, const BehaviorSpectrum& spectrum,
                        const DebateConfig& config, const DebateParticipants& participants) {
  config.validate();
  require(participants);
  if (text::trim(input.document).empty()) {
    throw Error(ErrorCode::kEmptyInput, "document is empty", "$.document");
  }
  DebateState s;
  s.config = config;
  s.document = input.document;
  s.dike_level = spectrum.level(input.dike_level).index;
  s.eris_level = spectrum.level(input.eris_level).index;
  s.decision = "the document is classified as " + level_phrase(spectrum, s.dike_level);
  s.dike_stance = "Defend the classification " + level_phrase(spectrum, s.dike_level) + ".";
  if (s.eris_level != s.dike_level) {
    s.eris_stance = "Contest the classification " + level_phrase(spectrum, s.dike_level) +
                    "; argue for " + level_phrase(spectrum, s.eris_level) + ".";
  } else {
    s.eris_stance = "Contest the classification " + level_phrase(spectrum, s.dike_level) +
                    "; argue that another level fits better.";
  }
  s.delta = config.delta0;

  // Both sides propose subtopics; the debate covers their union.
  for (Agent agent : {Agent::kDike, Agent::kEris}) {
    ProviderRequest req;
    req.role = agent == Agent::kDike ? Role::kDikeAgent : Role::kEris;
    req.stance = agent == Agent::kDike ? s.dike_stance : s.eris_stance;
    req.contentiousness = s.delta;
    req.prompt = "List the subtopics that must be argued to decide whether " + s.decision +
                 " is correct. One subtopic per line.\nDocument:\n" + s.document;
    auto* provider = agent == Agent::kDike ? participants.dike : participants.eris;
    for (auto& topic : parse_subtopics(provider->complete(req).text)) {
      bool dup = false;
      for (const auto& t : s.subtopics) dup = dup || text::iequals(t, topic);
      if (!dup) s.subtopics.push_back(std::move(topic));
    }
  }
  s.phase = DebatePhase::kInit;
  return s;
}

DebateState opening_remarks(DebateState state, const BehaviorSpectrum&,
                            const DebateParticipants& participants) {
  require(participants);
  expect_phase(state, DebatePhase::kInit);
  state.phase = DebatePhase::kOpening;
  state.round = 0;
  record(state, ask(participants.dike, state, Agent::kDike, DebatePhase::kOpening, {}));
  record(state, ask(participants.eris, state, Agent::kEris, DebatePhase::kOpening, {}));
  state.phase = DebatePhase::kRounds;
  return state;
}

DebateState run_rounds(DebateState state, const BehaviorSpectrum&,
                       const DebateParticipants& participants) {
  require(participants);
  expect_phase(state, DebatePhase::kRounds);
  const auto& cfg = state.config;
  const bool crit_guard = cfg.variant == DebateVariant::kSocraSynth && cfg.crit_enabled;
  if (cfg.crit_enabled && !participants.crit) {
    throw Error(ErrorCode::kCritUnavailable, "CRIT scoring requested but no scorer is configured");
  }
  if (crit_guard && !state.quality) state.quality = std::pair{0.0, 0.0};

  while (true) {
    state.delta /= cfg.damping;
    if (!reaches_floor(state.delta, cfg.floor)) break;
    if (crit_guard && state.quality->first < state.quality->second) break;
    ++state.round;
    // Each side answers what the other said last round.
    const auto last_of = [&](const std::vector<Argument>& side) {
      std::vector<std::string> out;
      for (const auto& a : side) {
        if (a.round == state.round - 1) out.push_back(a.text);
      }
      return out;
    };
    auto plus_ctx = last_of(state.theta_minus);
    auto minus_ctx = last_of(state.theta_plus);
    Argument plus, minus;
    if (participants.parallel_rebuttals) {
      auto f = std::async(std::launch::async, [&] {
        return ask(participants.eris, state, Agent::kEris, DebatePhase::kRounds, minus_ctx);
      });
      plus = ask(participants.dike, state, Agent::kDike, DebatePhase::kRounds, plus_ctx);
      minus = f.get();
    } else {
      plus = ask(participants.dike, state, Agent::kDike, DebatePhase::kRounds, plus_ctx);
      minus = ask(participants.eris, state, Agent::kEris, DebatePhase::kRounds, minus_ctx);
    }
    record(state, std::move(plus));
    record(state, std::move(minus));

    if (crit_guard) {
      std::string bundle = state.dike_stance;
      for (const auto& a : state.theta_plus) bundle += "\n" + a.text;
      for (const auto& a : state.theta_minus) bundle += "\n" + a.text;
      const double q = participants.crit->score(bundle);
      if (!std::isfinite(q)) {
        throw Error(ErrorCode::kNonFiniteValue, "CRIT score is not finite", "$.quality");
      }
      state.quality = std::pair{q, state.quality->first};
    }
  }
  return state;
}

DebateState concluding_remarks(DebateState state, const BehaviorSpectrum&,
                               const DebateParticipants& participants) {
  require(participants);
  expect_phase(state, DebatePhase::kRounds);
  ++state.round;
  const auto all = texts(state.transcript);
  record(state, ask(participants.dike, state, Agent::kDike, DebatePhase::kConcluding, all));
  record(state, ask(participants.eris, state, Agent::kEris, DebatePhase::kConcluding, all));
  state.phase = DebatePhase::kConcluding;
  return state;
}

std::optional<Consensus> parse_conciliation(std::string_view reply,
                                            const BehaviorSpectrum& spectrum) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  json doc;
  try {
    doc = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!doc.is_object() || !doc.value("consensus", true)) return std::nullopt;
  if (!doc.contains("dike_final_level") || !doc.contains("eris_final_level")) return std::nullopt;
  Consensus c;
  try {
    c.joint_statement = doc.value("joint_statement", std::string());
    c.dike_final_level = level_from_json(doc["dike_final_level"], spectrum);
    c.eris_final_level = level_from_json(doc["eris_final_level"], spectrum);
  } catch (const Error&) {
    return std::nullopt;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  return c;
}

DebateOutcome conciliate(DebateState& state, const BehaviorSpectrum& spectrum,
                         const DebateParticipants& participants) {
  require(participants);
  expect_phase(state, DebatePhase::kConcluding);
  ProviderRequest req;
  req.role = Role::kConciliator;
  req.contentiousness = state.delta;
  std::ostringstream p;
  p << "Two agents debated whether " << state.decision << ".\n"
    << "DIKE's stance: " << state.dike_stance << "\n"
    << "ERIS's stance: " << state.eris_stance << "\n"
    << "Levels on the '" << spectrum.id() << "' spectrum:\n";
  for (const auto& l : spectrum.levels()) p << "  " << l.index << ". " << l.label << '\n';
  p << "Read the arguments given as context and try to reconcile them. Reply with a JSON "
       "object {\"joint_statement\": string, \"consensus\": bool, \"dike_final_level\": "
       "label, \"eris_final_level\": label}.\nDocument:\n"
    << state.document;
  req.prompt = p.str();
  req.context = texts(state.transcript);

  DebateOutcome out;
  out.conciliator_reply = participants.conciliator->complete(req).text;
  out.consensus = parse_conciliation(out.conciliator_reply, spectrum);
  out.escalated = needs_escalation(out.consensus, state.config.tolerance_levels);
  out.transcript = state.transcript;
  state.phase = DebatePhase::kDone;
  return out;
}

DebateOutcome run_debate(const DebateInput& input, const BehaviorSpectrum& spectrum,
                         const DebateConfig& config, const DebateParticipants& participants,
                         DebateState* final_state) {
  auto s = init_debate(input, spectrum, config, participants);
  s = opening_remarks(std::move(s), spectrum, participants);
  s = run_rounds(std::move(s), spectrum, participants);
  s = concluding_remarks(std::move(s), spectrum, participants);
  auto out = conciliate(s, spectrum, participants);
  if (final_state) *final_state = std::move(s);
  return out;
}

ProviderRequest zero_shot_request(std::string_view document, const BehaviorSpectrum& spectrum,
                                  const DebateConfig& config) {
  ProviderRequest req;
  req.role = Role::kEris;
  req.contentiousness = config.delta0;
  std::ostringstream p;
  p << "Classify the following document on the '" << spectrum.id()
    << "' behavior spectrum. Levels:\n";
  for (const auto& l : spectrum.levels()) {
    p << "  " << l.index << ". " << l.label << ": " << l.description << '\n';
  }
  p << "Answer with the level label only.\n\n" << document;
  req.prompt = p.str();
  return req;
}

int parse_zero_shot_level(std::string_view reply, const BehaviorSpectrum& spectrum) {
  const auto trimmed = text::trim(reply);
  try {
    return spectrum.parse_level(trimmed);
  } catch (const Error&) {
  }
  // Fall back to the first line, minus list markers and punctuation.
  auto lines = text::split_lines(trimmed);
  if (!lines.empty()) {
    std::string first = text::trim(lines.front());
    while (!first.empty() && (first.back() == '.' || first.back() == '"')) first.pop_back();
    while (!first.empty() && first.front() == '"') first.erase(0, 1);
    try {
      return spectrum.parse_level(first);
    } catch (const Error&) {
    }
  }
  // Longest label mentioned anywhere.
  int best = 0;
  std::size_t best_len = 0;
  const auto lower = text::to_lower(trimmed);
  for (const auto& l : spectrum.levels()) {
    std::vector<std::string> names{l.label};
    names.insert(names.end(), l.aliases.begin(), l.aliases.end());
    for (const auto& n : names) {
      if (n.size() > best_len && lower.find(text::to_lower(n)) != std::string::npos) {
        best = l.index;
        best_len = n.size();
      }
    }
  }
  if (best == 0) {
    throw Error(ErrorCode::kParseError, "no behavior level in reply: " + std::string(trimmed));
  }
  return best;
}

}  // namespace dike
