#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dike/behavior.hpp"

namespace dike {

// Inclusive interval [min_level, max_level] of acceptable behavior levels.
struct Guardrail {
  std::string spectrum_id = "love-letter";
  int min_level = 4;
  int max_level = 7;
  int max_iters = 3;

  void validate(int levels) const;
  // Policy file: {spectrum_id, min_level, max_level, max_iters}.
  static Guardrail from_json(std::string_view json_text);
  // "4:7" style override.
  static Guardrail from_range(std::string_view range);
  static Guardrail from_range(std::string_view range, Guardrail base);

  friend bool operator==(const Guardrail&, const Guardrail&) = default;
};

enum class VerdictStatus { kCompliant, kViolation };
std::string_view to_string(VerdictStatus status);

struct Verdict {
  VerdictStatus status = VerdictStatus::kCompliant;
  int level = 0;
  int distance = 0;  // steps to the nearest in-range level

  bool compliant() const noexcept { return status == VerdictStatus::kCompliant; }
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

Verdict check(int level, const Guardrail& guardrail, int levels);

struct AdjustmentPlan {
  int target_level = 0;
  std::map<std::string, double> delta;  // target row minus current profile
  std::string rationale;
};

AdjustmentPlan plan_adjustment(const Classification& classification, const BehaviorMatrix& matrix,
                               const Guardrail& guardrail, const BehaviorSpectrum& spectrum);

// Per-emotion writing hints bundled as optional prompt material.
class LinguisticFeatures {
 public:
  static const LinguisticFeatures& bundled();
  static LinguisticFeatures from_json(std::string_view json_text);
  // Empty when the emotion has no entry.
  std::string hint_for(std::string_view emotion) const;

 private:
  std::map<std::string, std::string> by_lower_;
};

struct RectifyOptions {
  int max_iters = 3;
  int top_m = 5;
  bool feature_hints = false;
};

struct RectificationResult {
  std::string final_doc;
  int iterations = 0;
  std::vector<Verdict> verdicts;
  bool converged = false;
  std::optional<Classification> final_classification;
  std::optional<AdjustmentPlan> last_plan;
};

// Thrown when the provider refuses mid-loop; carries the work done so far.
class RectificationRefused : public RefusalError {
 public:
  RectificationRefused(const RefusalError& cause, RectificationResult partial)
      : RefusalError(cause.what(), cause.fingerprint()), partial_(std::move(partial)) {}
  const RectificationResult& partial() const noexcept { return partial_; }

 private:
  RectificationResult partial_;
};

ProviderRequest rectify_request(std::string_view doc, const AdjustmentPlan& plan,
                                const BehaviorSpectrum& spectrum, bool feature_hints);

// Rewrites doc toward the plan's target until the guardrail passes or
// max_iters rewrites have been attempted. `initial` is doc's classification.
RectificationResult rectify(std::string_view doc, const Classification& initial,
                            const BehaviorMatrix& matrix, const Guardrail& guardrail,
                            const BehaviorSpectrum& spectrum, const EmotionVocabulary& vocabulary,
                            Provider& provider, const RectifyOptions& options);

}  // namespace dike
