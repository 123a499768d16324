#include "dike/behavior.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bundled_data.hpp"
#include "dike/parallel.hpp"
#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

// --- BehaviorSpectrum -----------------------------------------------------

BehaviorSpectrum::BehaviorSpectrum(std::string id, std::string description,
                                   std::vector<BehaviorLevel> levels)
    : id_(std::move(id)), description_(std::move(description)), levels_(std::move(levels)) {
  if (levels_.empty()) throw Error(ErrorCode::kInvalidArgument, "behavior spectrum has no levels");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::kInvalidArgument, "behavior level indices must run 1..L");
    }
    if (i > 0 && !(levels_[i - 1].scalar < levels_[i].scalar)) {
      throw Error(ErrorCode::kInvalidArgument, "behavior levels must ascend by scalar");
    }
    if (!std::isfinite(levels_[i].scalar)) {
      throw Error(ErrorCode::kNonFiniteValue, "behavior scalar must be finite");
    }
  }
}

BehaviorSpectrum BehaviorSpectrum::from_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("behavior spectrum: ") + e.what());
  }
  if (doc.value("schema_version", 0) != 1) {
    throw Error(ErrorCode::kSchemaMismatch, "behavior spectrum: unsupported schema_version",
                "$.schema_version");
  }
  try {
    std::vector<BehaviorLevel> levels;
    for (const auto& l : doc.at("levels")) {
      BehaviorLevel level;
      level.index = l.at("index").get<int>();
      level.scalar = l.at("scalar").get<double>();
      level.label = l.at("label").get<std::string>();
      level.aliases = l.value("aliases", std::vector<std::string>{});
      level.description = l.value("description", "");
      level.dominant_emotions = l.value("dominant_emotions", std::vector<std::string>{});
      levels.push_back(std::move(level));
    }
    return BehaviorSpectrum(doc.at("id").get<std::string>(), doc.value("description", ""),
                            std::move(levels));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("behavior spectrum: ") + e.what());
  }
}

const BehaviorSpectrum& BehaviorSpectrum::bundled() {
  static const BehaviorSpectrum spectrum = from_json(detail::kBundledBehaviorsJson);
  return spectrum;
}

std::string BehaviorSpectrum::to_json() const {
  json levels = json::array();
  for (const auto& l : levels_) {
    levels.push_back({{"index", l.index},
                      {"scalar", l.scalar},
                      {"label", l.label},
                      {"aliases", l.aliases},
                      {"description", l.description},
                      {"dominant_emotions", l.dominant_emotions}});
  }
  json doc = {{"schema_version", 1},
              {"kind", "behavior_spectrum"},
              {"id", id_},
              {"description", description_},
              {"levels", levels}};
  return doc.dump();
}

const BehaviorLevel& BehaviorSpectrum::level(int index) const {
  if (index < 1 || index > size()) {
    throw Error(ErrorCode::kLevelOutOfRange,
                "level " + std::to_string(index) + " outside 1.." + std::to_string(size()));
  }
  return levels_[static_cast<std::size_t>(index - 1)];
}

const BehaviorLevel& BehaviorSpectrum::find(std::string_view label) const {
  const auto wanted = text::trim(label);
  for (const auto& l : levels_) {
    if (text::iequals(l.label, wanted)) return l;
    for (const auto& a : l.aliases) {
      if (text::iequals(a, wanted)) return l;
    }
  }
  throw Error(ErrorCode::kUnknownLabel, "no behavior level '" + wanted + "' in " + id_);
}

int BehaviorSpectrum::parse_level(std::string_view label_or_index) const {
  const auto s = text::trim(label_or_index);
  int index = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), index);
  if (ec == std::errc() && ptr == s.data() + s.size()) return level(index).index;
  return find(s).index;
}

std::vector<double> BehaviorSpectrum::scalars() const {
  std::vector<double> out;
  out.reserve(levels_.size());
  for (const auto& l : levels_) out.push_back(l.scalar);
  return out;
}

int BehaviorSpectrum::nearest_level(double value) const {
  return static_cast<int>(nearest_anchor_index(scalars(), value)) + 1;
}

// --- Vocabulary -----------------------------------------------------------

EmotionVocabulary::EmotionVocabulary(const SpectrumLibrary& library,
                                     const BehaviorSpectrum& behaviors) {
  for (const auto& s : library.spectra()) {
    for (const auto& t : s.terms()) by_lower_.emplace(text::to_lower(t.label), t.label);
  }
  for (const auto& l : behaviors.levels()) {
    for (const auto& e : l.dominant_emotions) by_lower_.emplace(text::to_lower(e), e);
  }
}

std::string EmotionVocabulary::snap(std::string_view label) const {
  auto it = by_lower_.find(text::to_lower(text::trim(label)));
  return it == by_lower_.end() ? std::string() : it->second;
}

// --- EmotionProfile -------------------------------------------------------

EmotionProfile::EmotionProfile(std::map<std::string, double> weights, bool normalize)
    : weights_(std::move(weights)) {
  for (const auto& [label, w] : weights_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "emotion weight for " + label + " must be >= 0");
    }
  }
  std::erase_if(weights_, [](const auto& kv) { return kv.second == 0.0; });
  if (normalize) {
    const double total = sum();
    if (total <= 0.0) throw Error(ErrorCode::kZeroVector, "cannot normalize an empty profile");
    for (auto& [label, w] : weights_) w /= total;
    normalized_ = true;
  }
}

EmotionProfile EmotionProfile::restore(std::map<std::string, double> weights, bool normalized) {
  EmotionProfile p(std::move(weights), false);
  p.normalized_ = normalized;
  return p;
}

double EmotionProfile::weight(const std::string& label) const {
  auto it = weights_.find(label);
  return it == weights_.end() ? 0.0 : it->second;
}

double EmotionProfile::sum() const {
  double total = 0.0;
  for (const auto& [label, w] : weights_) total += w;
  return total;
}

double EmotionProfile::norm() const {
  double sq = 0.0;
  for (const auto& [label, w] : weights_) sq += w * w;
  return std::sqrt(sq);
}

EmotionProfile EmotionProfile::scaled(double factor) const {
  auto w = weights_;
  for (auto& [label, v] : w) v *= factor;
  return EmotionProfile(std::move(w), false);
}

// --- Matrix ---------------------------------------------------------------

BehaviorMatrix::BehaviorMatrix(std::string spectrum_id, std::vector<Row> rows)
    : spectrum_id_(std::move(spectrum_id)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.support < 1) {
      throw Error(ErrorCode::kUncoveredLevel, "level " + std::to_string(i + 1) + " has no samples");
    }
    if (std::abs(r.profile.sum() - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument,
                  "matrix row " + std::to_string(i + 1) + " is not normalized");
    }
  }
}

const BehaviorMatrix::Row& BehaviorMatrix::row(int level) const {
  if (level < 1 || level > levels()) {
    throw Error(ErrorCode::kLevelOutOfRange, "matrix has no level " + std::to_string(level));
  }
  return rows_[static_cast<std::size_t>(level - 1)];
}

std::set<std::string> BehaviorMatrix::vocabulary() const {
  std::set<std::string> out;
  for (const auto& r : rows_) {
    for (const auto& [label, w] : r.profile.weights()) out.insert(label);
  }
  return out;
}

// --- Provider-backed steps ------------------------------------------------

ProviderRequest rewrite_request(const Document& doc, const BehaviorLevel& level,
                                const BehaviorSpectrum& spectrum) {
  ProviderRequest req;
  req.role = Role::kRewriter;
  req.stance = level.label;
  std::ostringstream p;
  p << "Rewrite the following document so that it reflects the linguistic behavior '"
    << level.label << "' (" << level.description << "), level " << level.index << " of "
    << spectrum.size() << " on the '" << spectrum.id()
    << "' behavior spectrum. Keep the original structure and subject matter.\n\n"
    << doc.text;
  req.prompt = p.str();
  return req;
}

ProviderRequest analysis_request(std::string_view doc, int m) {
  ProviderRequest req;
  req.role = Role::kEmotionAnalyst;
  std::ostringstream p;
  p << "Identify the top " << m
    << " emotions expressed in the following document, most dominant first. "
       "Answer with a comma-separated list of emotion names only.\n\n"
    << doc;
  req.prompt = p.str();
  return req;
}

RewriteSet generate_training_corpus(const DocumentSet& docs, const BehaviorSpectrum& spectrum,
                                    Provider& provider, const CorpusOptions& options) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyInput, "training corpus is empty");
  const auto levels = static_cast<std::size_t>(spectrum.size());
  const std::size_t total = docs.size() * levels;

  struct Slot {
    std::string text;
    std::string refusal;
    bool refused = false;
  };
  std::vector<Slot> slots(total);
  parallel_for(total, options.max_in_flight, [&](std::size_t i) {
    const auto& doc = docs[i / levels];
    const auto& level = spectrum.levels()[i % levels];
    try {
      slots[i].text = provider.complete(rewrite_request(doc, level, spectrum)).text;
    } catch (const RefusalError& e) {
      slots[i].refused = true;
      slots[i].refusal = e.what();
    }
  });

  RewriteSet out;
  out.spectrum_id = spectrum.id();
  for (std::size_t i = 0; i < total; ++i) {
    const auto& doc = docs[i / levels];
    const int level = static_cast<int>(i % levels) + 1;
    if (slots[i].refused) {
      out.gaps.push_back({doc.id, level, slots[i].refusal});
    } else {
      out.rewrites.push_back({doc.id, level, std::move(slots[i].text)});
    }
  }
  return out;
}

namespace {

std::string clean_emotion_token(std::string_view raw) {
  std::string s = text::trim(raw);
  // Leading list markers: "1.", "2)", "-", "*".
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s.erase(0, i + 1);
  s = text::trim(s);
  while (!s.empty() && (s.front() == '-' || s.front() == '*')) s.erase(0, 1);
  // Trailing annotations: "Love (+1.0)", "Joy: evident in ...".
  if (auto pos = s.find_first_of("(:"); pos != std::string::npos) s.erase(pos);
  s = text::trim(s);
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '"')) s.pop_back();
  while (!s.empty() && s.front() == '"') s.erase(0, 1);
  return text::trim(s);
}

}  // namespace

std::vector<RankedEmotion> parse_emotion_list(std::string_view reply, int m,
                                              const EmotionVocabulary& vocabulary) {
  std::vector<RankedEmotion> out;
  std::string token;
  auto flush = [&] {
    auto cleaned = clean_emotion_token(token);
    token.clear();
    if (cleaned.empty() || static_cast<int>(out.size()) >= m) return;
    auto canonical = vocabulary.snap(cleaned);
    const bool known = !canonical.empty();
    const auto& label = known ? canonical : cleaned;
    for (const auto& e : out) {
      if (text::iequals(e.label, label)) return;
    }
    out.push_back({label, static_cast<int>(out.size()) + 1, known});
  };
  for (char c : reply) {
    if (c == ',' || c == '\n' || c == ';') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<RankedEmotion> extract_emotions(std::string_view doc, int m, Provider& provider,
                                            const EmotionVocabulary& vocabulary) {
  if (text::trim(doc).empty()) throw Error(ErrorCode::kEmptyInput, "document is empty", "$.text");
  if (m < 1) throw Error(ErrorCode::kInvalidArgument, "top-m must be >= 1", "$.top_m");
  const auto reply = provider.complete(analysis_request(doc, m));
  return parse_emotion_list(reply.text, m, vocabulary);
}

EmotionProfile profile_of(std::span<const RankedEmotion> emotions) {
  std::vector<std::string> labels;
  labels.reserve(emotions.size());
  for (const auto& e : emotions) labels.push_back(e.label);
  return profile_of(labels);
}

EmotionProfile profile_of(std::span<const std::string> labels) {
  if (labels.empty()) throw Error(ErrorCode::kEmptyInput, "emotion list is empty");
  std::map<std::string, double> counts;
  for (const auto& l : labels) counts[l] += 1.0;
  return EmotionProfile(std::move(counts), true);
}

BehaviorMatrix build_matrix(const RewriteSet& rewrites, std::span<const EmotionProfile> profiles,
                            int levels) {
  if (profiles.size() != rewrites.rewrites.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one profile per rewrite required");
  }
  // Contributions are summed in sorted order so the result is independent of
  // the input order down to the last bit.
  std::vector<std::map<std::string, std::vector<double>>> contributions(
      static_cast<std::size_t>(levels));
  std::vector<BehaviorMatrix::Row> rows(static_cast<std::size_t>(levels));
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int level = rewrites.rewrites[i].level;
    if (level < 1 || level > levels) {
      throw Error(ErrorCode::kLevelOutOfRange, "rewrite tagged with level " + std::to_string(level));
    }
    auto& row = rows[static_cast<std::size_t>(level - 1)];
    ++row.support;
    for (const auto& [label, w] : profiles[i].weights()) {
      contributions[static_cast<std::size_t>(level - 1)][label].push_back(w);
      ++row.presence[label];
    }
  }
  for (int l = 1; l <= levels; ++l) {
    auto& row = rows[static_cast<std::size_t>(l - 1)];
    if (row.support == 0) {
      throw Error(ErrorCode::kUncoveredLevel,
                  "level " + std::to_string(l) + " has no profiled rewrites");
    }
    std::map<std::string, double> sums;
    for (auto& [label, values] : contributions[static_cast<std::size_t>(l - 1)]) {
      std::sort(values.begin(), values.end());
      sums[label] = std::accumulate(values.begin(), values.end(), 0.0);
    }
    row.profile = EmotionProfile(std::move(sums), true);
  }
  return BehaviorMatrix(rewrites.spectrum_id, std::move(rows));
}

double cosine_similarity(const EmotionProfile& a, const EmotionProfile& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroVector, "zero-norm emotion vector");
  double dot = 0.0;
  for (const auto& [label, w] : a.weights()) dot += w * b.weight(label);
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

Classification classify(const EmotionProfile& profile, const BehaviorMatrix& matrix,
                        const BehaviorSpectrum& spectrum) {
  if (matrix.levels() != spectrum.size()) {
    throw Error(ErrorCode::kInvalidArgument, "matrix and spectrum disagree on level count");
  }
  Classification out;
  out.profile = profile;
  int best = 0;
  double best_score = 0.0;
  for (int l = 1; l <= matrix.levels(); ++l) {
    const double score = cosine_similarity(profile, matrix.row(l).profile);
    out.scores[l] = score;
    if (best == 0 || score > best_score) {
      best = l;
      best_score = score;
    } else if (score == best_score &&
               std::abs(spectrum.level(l).scalar) < std::abs(spectrum.level(best).scalar)) {
      best = l;
    }
  }
  out.level = best;
  return out;
}

double prediction_entropy(std::span<const int> assignments, int levels) {
  if (assignments.empty()) throw Error(ErrorCode::kEmptyInput, "no assignments");
  std::vector<std::size_t> counts(static_cast<std::size_t>(levels), 0);
  for (int a : assignments) {
    if (a < 1 || a > levels) {
      throw Error(ErrorCode::kLevelOutOfRange, "assignment " + std::to_string(a) + " out of range");
    }
    ++counts[static_cast<std::size_t>(a - 1)];
  }
  const double n = static_cast<double>(assignments.size());
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

EvaluationReport evaluate(std::span<const int> predictions, std::span<const int> ground_truth,
                          int levels) {
  if (predictions.size() != ground_truth.size()) {
    throw Error(ErrorCode::kLengthMismatch, "predictions and ground truth differ in length");
  }
  EvaluationReport r;
  r.count = predictions.size();
  r.entropy = prediction_entropy(predictions, levels);
  r.confusion.assign(static_cast<std::size_t>(levels),
                     std::vector<int>(static_cast<std::size_t>(levels), 0));
  std::size_t exact = 0;
  std::size_t near = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int t = ground_truth[i];
    if (t < 1 || t > levels) {
      throw Error(ErrorCode::kLevelOutOfRange, "ground truth " + std::to_string(t) + " out of range");
    }
    ++r.confusion[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
    if (p == t) ++exact;
    if (std::abs(p - t) <= 1) ++near;
  }
  r.accuracy = static_cast<double>(exact) / static_cast<double>(r.count);
  r.within_one_level_accuracy = static_cast<double>(near) / static_cast<double>(r.count);
  return r;
}

std::string heatmap_csv(const BehaviorMatrix& matrix, const BehaviorSpectrum& spectrum) {
  const auto vocab = matrix.vocabulary();
  std::ostringstream out;
  out << "level,label";
  for (const auto& e : vocab) out << ',' << e;
  out << '\n';
  for (int l = 1; l <= matrix.levels(); ++l) {
    const auto& row = matrix.row(l);
    out << l << ',' << spectrum.level(l).label;
    for (const auto& e : vocab) {
      auto it = row.presence.find(e);
      out << ',' << (it == row.presence.end() ? 0 : it->second);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dike
