#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dike/behavior.hpp"
#include "dike/provider.hpp"

namespace dike {

enum class DebateVariant { kDikeEris, kSocraSynth };
std::string_view to_string(DebateVariant variant);

struct DebateConfig {
  double delta0 = 0.9;
  double damping = 1.2;
  double floor = 0.1;
  DebateVariant variant = DebateVariant::kDikeEris;
  bool crit_enabled = false;
  int tolerance_levels = 1;

  // 0 < floor < delta0 <= 1 and damping > 1.
  void validate() const;
  friend bool operator==(const DebateConfig&, const DebateConfig&) = default;
};

// Every Δ the rebuttal loop visits: delta0/δ, delta0/δ², ... while >= floor.
std::vector<double> contentiousness_schedule(const DebateConfig& config);

enum class DebatePhase { kInit, kOpening, kRounds, kConcluding, kDone };
std::string_view to_string(DebatePhase phase);

enum class Agent { kDike, kEris, kConciliator };
std::string_view to_string(Agent agent);

struct Argument {
  Agent agent = Agent::kDike;
  DebatePhase phase = DebatePhase::kOpening;
  int round = 0;  // 0 = opening, 1..k rebuttals, k+1 = closing
  double delta = 0.0;
  std::string text;

  friend bool operator==(const Argument&, const Argument&) = default;
};

// External argument-quality scorer (CRIT). Receives S⁺ + Θ⁺ + Θ⁻ as one bundle.
class CritScorer {
 public:
  virtual ~CritScorer() = default;
  virtual double score(std::string_view bundle) = 0;
};

struct DebateParticipants {
  Provider* dike = nullptr;
  Provider* eris = nullptr;
  Provider* conciliator = nullptr;
  CritScorer* crit = nullptr;
  // Within a round both rebuttals only see the opponent's previous round, so
  // they may run concurrently.
  bool parallel_rebuttals = true;
};

struct DebateInput {
  std::string document;
  int dike_level = 0;  // DIKE's classification, the decision under review
  int eris_level = 0;  // the adversary's (zero-shot) classification
};

struct DebateState {
  DebateConfig config;
  std::string document;
  std::string decision;
  int dike_level = 0;
  int eris_level = 0;
  std::vector<std::string> subtopics;
  std::string dike_stance;  // S⁺
  std::string eris_stance;  // S⁻
  double delta = 0.0;
  int round = 0;
  std::vector<Argument> theta_plus;
  std::vector<Argument> theta_minus;
  std::vector<Argument> transcript;  // both sides, in the order produced
  // (current, previous) CRIT scores, socrasynth variant only.
  std::optional<std::pair<double, double>> quality;
  DebatePhase phase = DebatePhase::kInit;
};

struct Consensus {
  std::string joint_statement;
  int dike_final_level = 0;
  int eris_final_level = 0;

  friend bool operator==(const Consensus&, const Consensus&) = default;
};

struct DebateOutcome {
  std::vector<Argument> transcript;
  std::optional<Consensus> consensus;
  std::string conciliator_reply;
  bool escalated = false;
  std::optional<std::string> feedback_ref;  // review case id when escalated
};

// escalated <=> no consensus, or final levels more than `tolerance` apart.
bool needs_escalation(const std::optional<Consensus>& consensus, int tolerance);

DebateState init_debate(const DebateInput& input, const BehaviorSpectrum& spectrum,
                        const DebateConfig& config, const DebateParticipants& participants);
DebateState opening_remarks(DebateState state, const BehaviorSpectrum& spectrum,
                            const DebateParticipants& participants);
DebateState run_rounds(DebateState state, const BehaviorSpectrum& spectrum,
                       const DebateParticipants& participants);
DebateState concluding_remarks(DebateState state, const BehaviorSpectrum& spectrum,
                               const DebateParticipants& participants);
DebateOutcome conciliate(DebateState& state, const BehaviorSpectrum& spectrum,
                         const DebateParticipants& participants);

// Parses {"joint_statement", "consensus", "dike_final_level", "eris_final_level"}
// from a conciliator reply; nullopt when absent or declined.
std::optional<Consensus> parse_conciliation(std::string_view reply,
                                            const BehaviorSpectrum& spectrum);

// init -> opening -> rounds -> concluding -> conciliate.
DebateOutcome run_debate(const DebateInput& input, const BehaviorSpectrum& spectrum,
                         const DebateConfig& config, const DebateParticipants& participants,
                         DebateState* final_state = nullptr);

// Request for the adversary's own zero-shot level of a document.
ProviderRequest zero_shot_request(std::string_view document, const BehaviorSpectrum& spectrum,
                                  const DebateConfig& config);
int parse_zero_shot_level(std::string_view reply, const BehaviorSpectrum& spectrum);

}  // namespace dike
