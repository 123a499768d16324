#include "dike/guardrail.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bundled_data.hpp"
#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

void Guardrail::validate(int levels) const {
  if (min_level < 1 || min_level > max_level || max_level > levels) {
    throw Error(ErrorCode::kInvalidArgument,
                "guardrail must satisfy 1 <= min_level <= max_level <= " + std::to_string(levels),
                "$.min_level");
  }
  if (max_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1", "$.max_iters");
  }
}

Guardrail Guardrail::from_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("policy: ") + e.what());
  }
  Guardrail g;
  try {
    g.spectrum_id = doc.value("spectrum_id", g.spectrum_id);
    g.min_level = doc.value("min_level", g.min_level);
    g.max_level = doc.value("max_level", g.max_level);
    g.max_iters = doc.value("max_iters", g.max_iters);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("policy: ") + e.what(), "$");
  }
  return g;
}

Guardrail Guardrail::from_range(std::string_view range) { return from_range(range, Guardrail{}); }

Guardrail Guardrail::from_range(std::string_view range, Guardrail base) {
  const auto colon = range.find(':');
  auto parse = [&](std::string_view part, int& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && ptr == part.data() + part.size();
  };
  if (colon == std::string_view::npos || !parse(range.substr(0, colon), base.min_level) ||
      !parse(range.substr(colon + 1), base.max_level)) {
    throw Error(ErrorCode::kInvalidArgument, "range must look like MIN:MAX", "--range");
  }
  return base;
}

std::string_view to_string(VerdictStatus status) {
  return status == VerdictStatus::kCompliant ? "compliant" : "violation";
}

Verdict check(int level, const Guardrail& guardrail, int levels) {
  if (level < 1 || level > levels) {
    throw Error(ErrorCode::kLevelOutOfRange,
                "level " + std::to_string(level) + " outside 1.." + std::to_string(levels));
  }
  guardrail.validate(levels);
  Verdict v;
  v.level = level;
  if (level < guardrail.min_level) {
    v.distance = guardrail.min_level - level;
  } else if (level > guardrail.max_level) {
    v.distance = level - guardrail.max_level;
  }
  v.status = v.distance == 0 ? VerdictStatus::kCompliant : VerdictStatus::kViolation;
  return v;
}

AdjustmentPlan plan_adjustment(const Classification& classification, const BehaviorMatrix& matrix,
                               const Guardrail& guardrail, const BehaviorSpectrum& spectrum) {
  if (guardrail.spectrum_id != spectrum.id() || matrix.spectrum_id() != spectrum.id()) {
    throw Error(ErrorCode::kInvalidArgument, "guardrail, matrix and spectrum must share an id",
                "$.spectrum_id");
  }
  const auto verdict = check(classification.level, guardrail, spectrum.size());
  AdjustmentPlan plan;
  if (verdict.compliant()) {
    plan.target_level = classification.level;
    plan.rationale = "level " + std::to_string(classification.level) + " already within [" +
                     std::to_string(guardrail.min_level) + ", " +
                     std::to_string(guardrail.max_level) + "]";
    return plan;
  }
  // Nearest in-range level; ties toward the neutral scalar.
  int target = 0;
  for (int l = guardrail.min_level; l <= guardrail.max_level; ++l) {
    if (target == 0) {
      target = l;
      continue;
    }
    const int d = std::abs(l - classification.level);
    const int best = std::abs(target - classification.level);
    if (d < best || (d == best && std::abs(spectrum.level(l).scalar) <
                                      std::abs(spectrum.level(target).scalar))) {
      target = l;
    }
  }
  plan.target_level = target;
  const auto& goal = matrix.row(target).profile;
  std::set<std::string> labels;
  for (const auto& [label, w] : goal.weights()) labels.insert(label);
  for (const auto& [label, w] : classification.profile.weights()) labels.insert(label);
  for (const auto& label : labels) {
    plan.delta[label] = goal.weight(label) - classification.profile.weight(label);
  }
  plan.rationale = "level " + std::to_string(classification.level) + " (" +
                   spectrum.level(classification.level).label + ") violates [" +
                   std::to_string(guardrail.min_level) + ", " +
                   std::to_string(guardrail.max_level) + "]; nearest acceptable level is " +
                   std::to_string(target) + " (" + spectrum.level(target).label + ")";
  return plan;
}

LinguisticFeatures LinguisticFeatures::from_json(std::string_view json_text) {
  LinguisticFeatures out;
  try {
    const auto doc = json::parse(json_text);
    for (const auto& entry : doc.at("entries")) {
      const auto features = entry.at("features").get<std::string>();
      for (const auto& e : entry.at("emotions")) {
        out.by_lower_.emplace(text::to_lower(e.get<std::string>()), features);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("linguistic features: ") + e.what());
  }
  return out;
}

const LinguisticFeatures& LinguisticFeatures::bundled() {
  static const LinguisticFeatures features = from_json(detail::kBundledFeaturesJson);
  return features;
}

std::string LinguisticFeatures::hint_for(std::string_view emotion) const {
  auto it = by_lower_.find(text::to_lower(emotion));
  return it == by_lower_.end() ? std::string() : it->second;
}

namespace {

std::string signed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

// Largest magnitude first, then by label.
std::vector<std::pair<std::string, double>> ordered(const std::map<std::string, double>& delta,
                                                    bool positive) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [label, d] : delta) {
    if (positive ? d > 0.0 : d < 0.0) out.emplace_back(label, d);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::abs(a.second) > std::abs(b.second);
  });
  return out;
}

}  // namespace

ProviderRequest rectify_request(std::string_view doc, const AdjustmentPlan& plan,
                                const BehaviorSpectrum& spectrum, bool feature_hints) {
  const auto& target = spectrum.level(plan.target_level);
  ProviderRequest req;
  req.role = Role::kRewriter;
  req.stance = target.label;
  std::ostringstream p;
  p << "Rewrite the following document so that it reflects the linguistic behavior '"
    << target.label << "' (" << target.description << "), level " << target.index << " of "
    << spectrum.size() << " on the '" << spectrum.id() << "' behavior spectrum.\n"
    << "Adjust its emotions by these amounts (target minus current):\n";
  const auto up = ordered(plan.delta, true);
  const auto down = ordered(plan.delta, false);
  for (const auto& [label, d] : up) p << "  emphasize " << label << ' ' << signed4(d) << '\n';
  for (const auto& [label, d] : down) p << "  suppress " << label << ' ' << signed4(d) << '\n';
  if (feature_hints) {
    bool header = false;
    for (const auto& [label, d] : up) {
      const auto hint = LinguisticFeatures::bundled().hint_for(label);
      if (hint.empty()) continue;
      if (!header) p << "Linguistic hints:\n";
      header = true;
      p << "  " << label << ": " << hint << '\n';
    }
  }
  p << "Preserve the structure (paragraphs, stanzas, line breaks) and the subject matter.\n\n"
    << doc;
  req.prompt = p.str();
  return req;
}

RectificationResult rectify(std::string_view doc, const Classification& initial,
                            const BehaviorMatrix& matrix, const Guardrail& guardrail,
                            const BehaviorSpectrum& spectrum, const EmotionVocabulary& vocabulary,
                            Provider& provider, const RectifyOptions& options) {
  if (options.max_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1", "$.max_iters");
  }
  RectificationResult result;
  result.final_doc = std::string(doc);
  result.final_classification = initial;
  result.verdicts.push_back(check(initial.level, guardrail, spectrum.size()));
  if (result.verdicts.back().compliant()) {
    result.converged = true;
    return result;
  }
  Classification current = initial;
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    auto plan = plan_adjustment(current, matrix, guardrail, spectrum);
    result.last_plan = plan;
    std::string rewritten;
    try {
      rewritten = provider
                      .complete(rectify_request(result.final_doc, plan, spectrum,
                                                options.feature_hints))
                      .text;
    } catch (const RefusalError& e) {
      throw RectificationRefused(e, result);
    }
    result.iterations = iter;
    result.final_doc = rewritten;
    try {
      const auto emotions = extract_emotions(result.final_doc, options.top_m, provider, vocabulary);
      current = classify(profile_of(emotions), matrix, spectrum);
    } catch (const RefusalError& e) {
      throw RectificationRefused(e, result);
    }
    result.final_classification = current;
    result.verdicts.push_back(check(current.level, guardrail, spectrum.size()));
    if (result.verdicts.back().compliant()) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace dike
