#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dike/behavior.hpp"
#include "dike/document.hpp"

namespace dike {

// --- Documents -------------------------------------------------------------

enum class IngestFormat { kJsonl, kDirectory };
IngestFormat ingest_format_from_string(std::string_view name);  // "jsonl" | "dir"

// "doc-" + first 12 hex digits of the SHA-256 of the whitespace-normalized text.
std::string document_id(std::string_view text);

// Loads documents; missing ids come from document_id(). Repeated texts are
// dropped with a warning. Throws Error{kParseError} naming file and line.
DocumentSet ingest(const std::filesystem::path& path, IngestFormat format,
                   std::vector<std::string>* warnings = nullptr);
DocumentSet parse_jsonl_documents(std::string_view content, const std::string& origin,
                                  std::vector<std::string>* warnings = nullptr);

// --- Annotations and ground truth -----------------------------------------

struct Annotation {
  std::string doc_id;
  std::string annotator_id;
  int level = 0;
  int rank = 1;  // 1 = most dominant, up to 3

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// CSV with header doc_id,annotator,label,rank. label may be a level label,
// alias or index.
std::vector<Annotation> parse_annotations_csv(std::string_view content,
                                              const BehaviorSpectrum& spectrum,
                                              const std::string& origin = "<memory>");
std::vector<Annotation> load_annotations_csv(const std::filesystem::path& path,
                                             const BehaviorSpectrum& spectrum);

struct GroundTruth {
  std::string doc_id;
  double mean_scalar = 0.0;
  int level = 0;
  double stddev = 0.0;  // population
  bool accepted = false;
  std::vector<std::string> sources;
  std::vector<int> source_levels;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

inline constexpr double kAcceptStddev = 0.3;

// Averages each source's rank-1 level scalar for one document.
// Throws Error{kMissingSource} when fewer than min_sources contribute.
GroundTruth merge_ground_truth(std::string_view doc_id, std::span<const Annotation> annotations,
                               const BehaviorSpectrum& spectrum, std::size_t min_sources = 1,
                               double threshold = kAcceptStddev);
// One GroundTruth per annotated document, sorted by doc id.
std::vector<GroundTruth> merge_all(std::span<const Annotation> annotations,
                                   const BehaviorSpectrum& spectrum, std::size_t min_sources = 1,
                                   double threshold = kAcceptStddev);

// --- Review cases ------------------------------------------------------------

enum class CaseStatus { kOpen, kDecided };
std::string_view to_string(CaseStatus status);
CaseStatus case_status_from_string(std::string_view s);

struct ModeratorDecision {
  int level = 0;
  std::string rationale;
  std::string decided_at;

  friend bool operator==(const ModeratorDecision&, const ModeratorDecision&) = default;
};

struct ReviewCase {
  std::string id;
  std::string doc_id;
  std::string doc_excerpt;
  int dike_level = 0;
  int eris_level = 0;  // zero-shot
  std::string transcript_ref;
  CaseStatus status = CaseStatus::kOpen;
  std::optional<ModeratorDecision> decision;
  std::optional<std::string> feedback_log_entry;
  std::string opened_at;

  friend bool operator==(const ReviewCase&, const ReviewCase&) = default;
};

std::string utc_now_iso8601();

// --- JSON ------------------------------------------------------------------

void to_json(nlohmann::json& j, const Document& d);
void from_json(const nlohmann::json& j, Document& d);
void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);
void to_json(nlohmann::json& j, const GroundTruth& g);
void from_json(const nlohmann::json& j, GroundTruth& g);
void to_json(nlohmann::json& j, const ModeratorDecision& d);
void from_json(const nlohmann::json& j, ModeratorDecision& d);
void to_json(nlohmann::json& j, const ReviewCase& c);
void from_json(const nlohmann::json& j, ReviewCase& c);

// --- File-backed store ------------------------------------------------------

// Everything lives under one data directory:
//   documents.json, rewrites.json, matrix.json, ground_truth.json,
//   cases/<id>.json, transcripts/<id>.json, feedback.jsonl
// Each JSON artifact is wrapped as {"schema_version", "kind", "data"} and
// replaced atomically, so readers never see a half-written file.
class Store {
 public:
  static constexpr int kSchemaVersion = 1;

  explicit Store(std::filesystem::path data_dir);
  const std::filesystem::path& root() const noexcept { return root_; }

  void save_documents(const DocumentSet& docs);
  DocumentSet load_documents() const;

  void save_rewrites(const RewriteSet& rewrites);
  RewriteSet load_rewrites() const;

  void save_matrix(const BehaviorMatrix& matrix);
  BehaviorMatrix load_matrix() const;
  bool has_matrix() const;

  void save_ground_truth(const std::vector<GroundTruth>& truth);
  std::vector<GroundTruth> load_ground_truth() const;

  // Returns the transcript ref.
  std::string save_transcript(const std::string& id, const nlohmann::json& transcript);
  nlohmann::json load_transcript(const std::string& ref) const;

  // Throws Error{kConflict} if the id exists.
  void create_case(const ReviewCase& c);
  ReviewCase get_case(const std::string& id) const;  // Error{kNotFound}
  std::vector<ReviewCase> list_cases(std::optional<CaseStatus> status = std::nullopt) const;
  // open -> decided exactly once; a second decision raises Error{kConflict}.
  // Appends one line to feedback.jsonl.
  ReviewCase decide(const std::string& id, int level, std::string rationale,
                    const BehaviorSpectrum& spectrum, std::string decided_at = utc_now_iso8601());

  // Envelope helpers, exposed for tests.
  static std::string wrap(std::string_view kind, const nlohmann::json& data);
  static nlohmann::json unwrap(std::string_view kind, std::string_view content,
                               const std::string& origin);

 private:
  void write(const std::filesystem::path& rel, std::string_view kind, const nlohmann::json& data);
  nlohmann::json read(const std::filesystem::path& rel, std::string_view kind) const;
  std::mutex& lock_for(const std::filesystem::path& rel);

  std::filesystem::path root_;
  std::mutex locks_mutex_;
  std::map<std::string, std::mutex> locks_;
};

}  // namespace dike
