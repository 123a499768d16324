#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dike/document.hpp"
#include "dike/emotion.hpp"
#include "dike/provider.hpp"

namespace dike {

struct BehaviorLevel {
  int index = 0;  // 1..L
  double scalar = 0.0;
  std::string label;
  std::vector<std::string> aliases;
  std::string description;
  std::vector<std::string> dominant_emotions;
};

// Ordered behaviors from the negative pole (index 1) to the positive pole (L).
class BehaviorSpectrum {
 public:
  BehaviorSpectrum(std::string id, std::string description, std::vector<BehaviorLevel> levels);

  static BehaviorSpectrum from_json(std::string_view json_text);
  static const BehaviorSpectrum& bundled();  // love-letter spectrum
  std::string to_json() const;

  const std::string& id() const noexcept { return id_; }
  const std::string& description() const noexcept { return description_; }
  const std::vector<BehaviorLevel>& levels() const noexcept { return levels_; }
  int size() const noexcept { return static_cast<int>(levels_.size()); }

  // Throws Error{kLevelOutOfRange}.
  const BehaviorLevel& level(int index) const;
  // Case-insensitive match on label or alias; throws Error{kUnknownLabel}.
  const BehaviorLevel& find(std::string_view label) const;
  // Accepts a label, an alias, or a decimal index.
  int parse_level(std::string_view label_or_index) const;
  std::vector<double> scalars() const;
  // Level whose scalar is nearest to value (ties toward 0).
  int nearest_level(double value) const;

 private:
  std::string id_;
  std::string description_;
  std::vector<BehaviorLevel> levels_;
};

// Known emotion labels: every emotion-spectrum term plus the behaviors'
// dominant emotions.
class EmotionVocabulary {
 public:
  EmotionVocabulary(const SpectrumLibrary& library, const BehaviorSpectrum& behaviors);
  // Canonical spelling for a case-insensitive match, or empty.
  std::string snap(std::string_view label) const;

 private:
  std::map<std::string, std::string> by_lower_;
};

struct RankedEmotion {
  std::string label;
  int rank = 0;  // 1 = most dominant
  bool known = true;

  friend bool operator==(const RankedEmotion&, const RankedEmotion&) = default;
};

// Non-negative emotion weights; normalized profiles sum to 1.
class EmotionProfile {
 public:
  EmotionProfile() = default;
  explicit EmotionProfile(std::map<std::string, double> weights, bool normalize = true);
  // Takes stored weights as-is (no division), keeping the normalized flag.
  static EmotionProfile restore(std::map<std::string, double> weights, bool normalized);

  const std::map<std::string, double>& weights() const noexcept { return weights_; }
  bool normalized() const noexcept { return normalized_; }
  double weight(const std::string& label) const;
  double sum() const;
  double norm() const;
  EmotionProfile scaled(double factor) const;

  friend bool operator==(const EmotionProfile&, const EmotionProfile&) = default;

 private:
  std::map<std::string, double> weights_;
  bool normalized_ = false;
};

struct Rewrite {
  std::string source_doc;
  int level = 0;
  std::string text;

  friend bool operator==(const Rewrite&, const Rewrite&) = default;
};

struct RewriteGap {
  std::string source_doc;
  int level = 0;
  std::string reason;

  friend bool operator==(const RewriteGap&, const RewriteGap&) = default;
};

struct RewriteSet {
  std::string spectrum_id;
  std::vector<Rewrite> rewrites;
  std::vector<RewriteGap> gaps;  // refusals

  friend bool operator==(const RewriteSet&, const RewriteSet&) = default;
};

class BehaviorMatrix {
 public:
  struct Row {
    EmotionProfile profile;           // normalized
    int support = 0;                  // profiled rewrites at this level
    std::map<std::string, int> presence;  // rewrites naming each emotion

    friend bool operator==(const Row&, const Row&) = default;
  };

  BehaviorMatrix() = default;
  BehaviorMatrix(std::string spectrum_id, std::vector<Row> rows);

  const std::string& spectrum_id() const noexcept { return spectrum_id_; }
  int levels() const noexcept { return static_cast<int>(rows_.size()); }
  // 1-based, matching BehaviorLevel::index.
  const Row& row(int level) const;
  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::set<std::string> vocabulary() const;

  friend bool operator==(const BehaviorMatrix&, const BehaviorMatrix&) = default;

 private:
  std::string spectrum_id_;
  std::vector<Row> rows_;
};

struct Classification {
  int level = 0;
  std::map<int, double> scores;  // level index -> cosine similarity
  EmotionProfile profile;
};

struct CorpusOptions {
  std::size_t max_in_flight = 4;
};

ProviderRequest rewrite_request(const Document& doc, const BehaviorLevel& level,
                                const BehaviorSpectrum& spectrum);
ProviderRequest analysis_request(std::string_view doc, int m);

// N x L rewrites; refusals become gaps.
RewriteSet generate_training_corpus(const DocumentSet& docs, const BehaviorSpectrum& spectrum,
                                    Provider& provider, const CorpusOptions& options = {});

// Parses an analyst reply into at most m distinct ranked labels.
std::vector<RankedEmotion> parse_emotion_list(std::string_view reply, int m,
                                              const EmotionVocabulary& vocabulary);
std::vector<RankedEmotion> extract_emotions(std::string_view doc, int m, Provider& provider,
                                            const EmotionVocabulary& vocabulary);

// Weight 1 per listed emotion (duplicates summed), normalized.
EmotionProfile profile_of(std::span<const RankedEmotion> emotions);
EmotionProfile profile_of(std::span<const std::string> labels);

// profiles[i] belongs to rewrites.rewrites[i]. The result does not depend on
// the order of the rewrites.
BehaviorMatrix build_matrix(const RewriteSet& rewrites, std::span<const EmotionProfile> profiles,
                            int levels);

double cosine_similarity(const EmotionProfile& a, const EmotionProfile& b);

// argmax of cosine similarity; ties toward the level whose scalar is nearest
// 0, then the lower index.
Classification classify(const EmotionProfile& profile, const BehaviorMatrix& matrix,
                        const BehaviorSpectrum& spectrum);

// Base-2 Shannon entropy of the empirical distribution of assignments.
double prediction_entropy(std::span<const int> assignments, int levels);

struct EvaluationReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double within_one_level_accuracy = 0.0;
  double entropy = 0.0;
  // confusion[truth - 1][prediction - 1]
  std::vector<std::vector<int>> confusion;
};

EvaluationReport evaluate(std::span<const int> predictions, std::span<const int> ground_truth,
                          int levels);

// Figure-style level x emotion presence grid.
std::string heatmap_csv(const BehaviorMatrix& matrix, const BehaviorSpectrum& spectrum);

}  // namespace dike
