#include "dike/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <tuple>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <sstream>

#include "dike/error.hpp"
#include "dike/serialize.hpp"
#include "dike/text.hpp"

namespace dike {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Error parse_error(const std::string& origin, std::size_t line, const std::string& what) {
  return Error(ErrorCode::kParseError, origin + ":" + std::to_string(line) + ": " + what);
}

bool safe_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

void require_safe_id(std::string_view id, const char* field) {
  if (!safe_id(id)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid id '" + std::string(id) + "'", field);
  }
}

// Minimal RFC 4180 field splitter: commas, double-quoted fields, "" escapes.
std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(text::trim(cur));
  return out;
}

void add_document(DocumentSet& out, std::map<std::string, std::size_t>& by_id, Document doc,
                  const std::string& where, std::vector<std::string>* warnings) {
  if (text::trim(doc.text).empty()) throw Error(ErrorCode::kParseError, where + ": empty text");
  const std::string content_id = document_id(doc.text);
  if (doc.id.empty()) doc.id = content_id;
  // same text twice -> keep the first
  for (const auto& d : out) {
    if (text::normalize_whitespace(d.text) == text::normalize_whitespace(doc.text)) {
      if (warnings) warnings->push_back(where + ": duplicate of " + d.id + ", skipped");
      return;
    }
  }
  if (by_id.count(doc.id)) {
    throw Error(ErrorCode::kParseError, where + ": id '" + doc.id + "' already used by different text");
  }
  by_id[doc.id] = out.size();
  out.push_back(std::move(doc));
}

}  // namespace

// --- Documents -------------------------------------------------------------

IngestFormat ingest_format_from_string(std::string_view name) {
  if (name == "jsonl") return IngestFormat::kJsonl;
  if (name == "dir" || name == "plain-text-directory") return IngestFormat::kDirectory;
  throw Error(ErrorCode::kInvalidArgument, "format must be jsonl or dir", "format");
}

std::string document_id(std::string_view text) {
  return "doc-" + text::sha256_hex(text::normalize_whitespace(text)).substr(0, 12);
}

DocumentSet parse_jsonl_documents(std::string_view content, const std::string& origin,
                                  std::vector<std::string>* warnings) {
  DocumentSet out;
  std::map<std::string, std::size_t> by_id;
  const auto lines = text::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (text::trim(lines[i]).empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw parse_error(origin, lineno, "malformed JSON");
    }
    if (!j.is_object()) throw parse_error(origin, lineno, "expected an object");
    Document d;
    auto t = j.find("text");
    if (t == j.end() || !t->is_string()) throw parse_error(origin, lineno, "missing string 'text'");
    d.text = t->get<std::string>();
    if (auto id = j.find("id"); id != j.end() && !id->is_null()) {
      if (!id->is_string()) throw parse_error(origin, lineno, "'id' must be a string");
      d.id = id->get<std::string>();
      if (!safe_id(d.id)) throw parse_error(origin, lineno, "invalid id '" + d.id + "'");
    }
    d.source = j.value("source", origin);
    if (auto m = j.find("metadata"); m != j.end() && !m->is_null()) {
      if (!m->is_object()) throw parse_error(origin, lineno, "'metadata' must be an object");
      for (const auto& [k, v] : m->items()) d.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    add_document(out, by_id, std::move(d), origin + ":" + std::to_string(lineno), warnings);
  }
  return out;
}

DocumentSet ingest(const fs::path& path, IngestFormat format, std::vector<std::string>* warnings) {
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    throw Error(ErrorCode::kStorageUnavailable, "no such path: " + path.string(), "input");
  }
  if (format == IngestFormat::kJsonl) {
    return parse_jsonl_documents(text::read_file(path.string()), path.string(), warnings);
  }
  if (!fs::is_directory(path, ec)) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + " is not a directory", "input");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  DocumentSet out;
  std::map<std::string, std::size_t> by_id;
  for (const auto& f : files) {
    Document d;
    d.text = text::trim(text::read_file(f.string()));
    d.source = f.filename().string();
    add_document(out, by_id, std::move(d), f.string(), warnings);
  }
  return out;
}

// --- Annotations -------------------------------------------------------------

std::vector<Annotation> parse_annotations_csv(std::string_view content,
                                              const BehaviorSpectrum& spectrum,
                                              const std::string& origin) {
  const auto lines = text::split_lines(content);
  std::size_t first = 0;
  while (first < lines.size() && text::trim(lines[first]).empty()) ++first;
  if (first == lines.size()) return {};

  const auto header = split_csv(lines[first]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[text::to_lower(header[i])] = i;
  for (const char* name : {"doc_id", "annotator", "label", "rank"}) {
    if (!col.count(name)) throw parse_error(origin, first + 1, std::string("missing column '") + name + "'");
  }

  std::vector<Annotation> out;
  std::set<std::tuple<std::string, std::string, int>> seen_rank;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    if (text::trim(lines[i]).empty()) continue;
    const auto cells = split_csv(lines[i]);
    if (cells.size() != header.size()) {
      throw parse_error(origin, lineno, "expected " + std::to_string(header.size()) + " fields");
    }
    Annotation a;
    a.doc_id = cells[col["doc_id"]];
    a.annotator_id = cells[col["annotator"]];
    if (a.doc_id.empty() || a.annotator_id.empty()) throw parse_error(origin, lineno, "empty doc_id or annotator");
    try {
      a.level = spectrum.parse_level(cells[col["label"]]);
    } catch (const Error& e) {
      throw parse_error(origin, lineno, e.what());
    }
    const auto& rank = cells[col["rank"]];
    if (rank.size() != 1 || rank[0] < '1' || rank[0] > '3') {
      throw parse_error(origin, lineno, "rank must be 1, 2 or 3");
    }
    a.rank = rank[0] - '0';
    if (!seen_rank.insert({a.doc_id, a.annotator_id, a.rank}).second) {
      throw parse_error(origin, lineno, "rank " + rank + " repeated for " + a.annotator_id + " on " + a.doc_id);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> load_annotations_csv(const fs::path& path, const BehaviorSpectrum& spectrum) {
  return parse_annotations_csv(text::read_file(path.string()), spectrum, path.string());
}

// --- Ground truth ------------------------------------------------------------

GroundTruth merge_ground_truth(std::string_view doc_id, std::span<const Annotation> annotations,
                               const BehaviorSpectrum& spectrum, std::size_t min_sources,
                               double threshold) {
  std::map<std::string, int> rank1;  // annotator -> level
  for (const auto& a : annotations) {
    if (a.doc_id != doc_id || a.rank != 1) continue;
    spectrum.level(a.level);
    auto [it, fresh] = rank1.emplace(a.annotator_id, a.level);
    if (!fresh && it->second != a.level) {
      throw Error(ErrorCode::kInvalidArgument,
                  "annotator " + a.annotator_id + " gave two rank-1 levels for " + std::string(doc_id));
    }
  }
  if (rank1.empty() || rank1.size() < min_sources) {
    throw Error(ErrorCode::kMissingSource,
                std::string(doc_id) + ": " + std::to_string(rank1.size()) + " rank-1 source(s), need " +
                    std::to_string(std::max<std::size_t>(min_sources, 1)));
  }

  GroundTruth g;
  g.doc_id = doc_id;
  std::vector<double> xs;
  for (const auto& [who, level] : rank1) {
    g.sources.push_back(who);
    g.source_levels.push_back(level);
    xs.push_back(spectrum.level(level).scalar);
  }
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  g.mean_scalar = sum / n;
  // Population variance from pairwise gaps: exactly zero when sources agree.
  double pair_sq = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) pair_sq += (xs[i] - xs[j]) * (xs[i] - xs[j]);
  }
  g.stddev = std::sqrt(pair_sq / (n * n));
  g.accepted = g.stddev < threshold;
  g.level = spectrum.nearest_level(g.mean_scalar);
  return g;
}

std::vector<GroundTruth> merge_all(std::span<const Annotation> annotations,
                                   const BehaviorSpectrum& spectrum, std::size_t min_sources,
                                   double threshold) {
  std::set<std::string> docs;
  for (const auto& a : annotations) docs.insert(a.doc_id);
  std::vector<GroundTruth> out;
  for (const auto& d : docs) out.push_back(merge_ground_truth(d, annotations, spectrum, min_sources, threshold));
  return out;
}

// --- Review cases --------------------------------------------------------------

std::string_view to_string(CaseStatus status) {
  return status == CaseStatus::kOpen ? "open" : "decided";
}

CaseStatus case_status_from_string(std::string_view s) {
  if (s == "open") return CaseStatus::kOpen;
  if (s == "decided") return CaseStatus::kDecided;
  throw Error(ErrorCode::kInvalidArgument, "status must be open or decided", "status");
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- JSON ------------------------------------------------------------------

void to_json(json& j, const Document& d) {
  j = json{{"id", d.id}, {"text", d.text}, {"source", d.source}, {"metadata", d.metadata}};
}
void from_json(const json& j, Document& d) {
  d.id = j.at("id").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.source = j.value("source", "");
  d.metadata = j.value("metadata", std::map<std::string, std::string>{});
}

void to_json(json& j, const Annotation& a) {
  j = json{{"doc_id", a.doc_id}, {"annotator", a.annotator_id}, {"level", a.level}, {"rank", a.rank}};
}
void from_json(const json& j, Annotation& a) {
  a.doc_id = j.at("doc_id").get<std::string>();
  a.annotator_id = j.at("annotator").get<std::string>();
  a.level = j.at("level").get<int>();
  a.rank = j.at("rank").get<int>();
}

void to_json(json& j, const GroundTruth& g) {
  j = json{{"doc_id", g.doc_id},     {"mean_scalar", g.mean_scalar}, {"level", g.level},
           {"stddev", g.stddev},     {"accepted", g.accepted},       {"sources", g.sources},
           {"source_levels", g.source_levels}};
}
void from_json(const json& j, GroundTruth& g) {
  g.doc_id = j.at("doc_id").get<std::string>();
  g.mean_scalar = j.at("mean_scalar").get<double>();
  g.level = j.at("level").get<int>();
  g.stddev = j.at("stddev").get<double>();
  g.accepted = j.at("accepted").get<bool>();
  g.sources = j.value("sources", std::vector<std::string>{});
  g.source_levels = j.value("source_levels", std::vector<int>{});
}

void to_json(json& j, const ModeratorDecision& d) {
  j = json{{"level", d.level}, {"rationale", d.rationale}, {"decided_at", d.decided_at}};
}
void from_json(const json& j, ModeratorDecision& d) {
  d.level = j.at("level").get<int>();
  d.rationale = j.value("rationale", "");
  d.decided_at = j.value("decided_at", "");
}

void to_json(json& j, const ReviewCase& c) {
  j = json{{"id", c.id},
           {"doc_id", c.doc_id},
           {"doc_excerpt", c.doc_excerpt},
           {"dike_level", c.dike_level},
           {"eris_level", c.eris_level},
           {"transcript_ref", c.transcript_ref},
           {"status", to_string(c.status)},
           {"opened_at", c.opened_at}};
  j["decision"] = c.decision ? json(*c.decision) : json(nullptr);
  j["feedback_log_entry"] = c.feedback_log_entry ? json(*c.feedback_log_entry) : json(nullptr);
}
void from_json(const json& j, ReviewCase& c) {
  c.id = j.at("id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.doc_excerpt = j.value("doc_excerpt", "");
  c.dike_level = j.at("dike_level").get<int>();
  c.eris_level = j.at("eris_level").get<int>();
  c.transcript_ref = j.value("transcript_ref", "");
  c.status = case_status_from_string(j.at("status").get<std::string>());
  c.opened_at = j.value("opened_at", "");
  if (auto d = j.find("decision"); d != j.end() && !d->is_null()) {
    c.decision = d->get<ModeratorDecision>();
  } else {
    c.decision.reset();
  }
  if (auto f = j.find("feedback_log_entry"); f != j.end() && !f->is_null()) {
    c.feedback_log_entry = f->get<std::string>();
  } else {
    c.feedback_log_entry.reset();
  }
  if (c.status == CaseStatus::kDecided && !c.decision) {
    throw Error(ErrorCode::kParseError, "decided case " + c.id + " has no decision", "$.decision");
  }
}

// --- Store -----------------------------------------------------------------

Store::Store(fs::path data_dir) : root_(std::move(data_dir)) {
  std::error_code ec;
  for (const char* sub : {"", "cases", "transcripts"}) {
    fs::create_directories(root_ / sub, ec);
    if (ec) {
      throw Error(ErrorCode::kStorageUnavailable,
                  "cannot create data directory " + (root_ / sub).string() + ": " + ec.message(),
                  "data_dir");
    }
  }
}

std::string Store::wrap(std::string_view kind, const json& data) {
  json env = {{"schema_version", kSchemaVersion}, {"kind", kind}, {"data", data}};
  return env.dump(2) + "\n";
}

json Store::unwrap(std::string_view kind, std::string_view content, const std::string& origin) {
  json env = parse_json(content, origin);
  if (!env.is_object() || !env.contains("schema_version") || !env.contains("kind") ||
      !env.contains("data")) {
    throw Error(ErrorCode::kSchemaMismatch, origin + ": missing schema envelope");
  }
  if (!env["schema_version"].is_number_integer() || env["schema_version"].get<int>() != kSchemaVersion) {
    throw Error(ErrorCode::kSchemaMismatch, origin + ": schema_version " + env["schema_version"].dump() +
                                                ", expected " + std::to_string(kSchemaVersion));
  }
  if (env["kind"] != kind) {
    throw Error(ErrorCode::kSchemaMismatch,
                origin + ": kind " + env["kind"].dump() + ", expected \"" + std::string(kind) + "\"");
  }
  return env["data"];
}

std::mutex& Store::lock_for(const fs::path& rel) {
  std::lock_guard guard(locks_mutex_);
  return locks_[rel.string()];
}

void Store::write(const fs::path& rel, std::string_view kind, const json& data) {
  std::lock_guard guard(lock_for(rel));
  text::write_file_atomic((root_ / rel).string(), wrap(kind, data));
}

json Store::read(const fs::path& rel, std::string_view kind) const {
  const auto path = root_ / rel;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorCode::kNotFound, "no " + std::string(kind) + " stored at " + path.string());
  return unwrap(kind, text::read_file(path.string()), path.string());
}

namespace {

template <typename T>
T decode(const json& data, std::string_view kind) {
  try {
    return data.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string(kind) + ": " + e.what());
  }
}

}  // namespace

void Store::save_documents(const DocumentSet& docs) { write("documents.json", "documents", docs); }
DocumentSet Store::load_documents() const {
  return decode<DocumentSet>(read("documents.json", "documents"), "documents");
}

void Store::save_rewrites(const RewriteSet& rewrites) { write("rewrites.json", "rewrites", rewrites); }
RewriteSet Store::load_rewrites() const {
  return decode<RewriteSet>(read("rewrites.json", "rewrites"), "rewrites");
}

void Store::save_matrix(const BehaviorMatrix& matrix) { write("matrix.json", "behavior_matrix", matrix); }
BehaviorMatrix Store::load_matrix() const {
  return decode<BehaviorMatrix>(read("matrix.json", "behavior_matrix"), "behavior_matrix");
}
bool Store::has_matrix() const {
  std::error_code ec;
  return fs::exists(root_ / "matrix.json", ec);
}

void Store::save_ground_truth(const std::vector<GroundTruth>& truth) {
  write("ground_truth.json", "ground_truth", truth);
}
std::vector<GroundTruth> Store::load_ground_truth() const {
  return decode<std::vector<GroundTruth>>(read("ground_truth.json", "ground_truth"), "ground_truth");
}

std::string Store::save_transcript(const std::string& id, const json& transcript) {
  require_safe_id(id, "transcript_id");
  const std::string ref = "transcripts/" + id + ".json";
  write(ref, "transcript", transcript);
  return ref;
}

json Store::load_transcript(const std::string& ref) const {
  constexpr std::string_view prefix = "transcripts/";
  constexpr std::string_view suffix = ".json";
  const bool shaped = ref.size() > prefix.size() + suffix.size() && ref.starts_with(prefix) &&
                      ref.ends_with(suffix) &&
                      safe_id(std::string_view(ref).substr(prefix.size(), ref.size() - prefix.size() - suffix.size()));
  if (!shaped) throw Error(ErrorCode::kNotFound, "bad transcript ref '" + ref + "'");
  return read(ref, "transcript");
}

void Store::create_case(const ReviewCase& c) {
  require_safe_id(c.id, "id");
  const auto target = root_ / "cases" / (c.id + ".json");
  const auto tmp = root_ / "cases" / (c.id + ".json.new." + std::to_string(::getpid()));
  std::lock_guard guard(lock_for(fs::path("cases") / c.id));
  text::write_file_atomic(tmp.string(), wrap("review_case", c));
  // link() refuses to replace, so two creators cannot both win
  const int rc = ::link(tmp.c_str(), target.c_str());
  const int err = errno;
  ::unlink(tmp.c_str());
  if (rc != 0) {
    if (err == EEXIST) throw Error(ErrorCode::kConflict, "review case " + c.id + " already exists");
    throw Error(ErrorCode::kStorageUnavailable, "cannot create " + target.string());
  }
}

ReviewCase Store::get_case(const std::string& id) const {
  if (!safe_id(id)) throw Error(ErrorCode::kNotFound, "no review case '" + id + "'");
  try {
    return decode<ReviewCase>(read(fs::path("cases") / (id + ".json"), "review_case"), "review_case");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNotFound) throw Error(ErrorCode::kNotFound, "no review case '" + id + "'");
    throw;
  }
}

std::vector<ReviewCase> Store::list_cases(std::optional<CaseStatus> status) const {
  std::vector<ReviewCase> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(root_ / "cases", ec)) {
    const auto name = e.path().filename().string();
    if (!name.ends_with(".json")) continue;
    auto c = get_case(name.substr(0, name.size() - 5));
    if (!status || c.status == *status) out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const ReviewCase& a, const ReviewCase& b) {
    return std::tie(a.opened_at, a.id) < std::tie(b.opened_at, b.id);
  });
  return out;
}

ReviewCase Store::decide(const std::string& id, int level, std::string rationale,
                         const BehaviorSpectrum& spectrum, std::string decided_at) {
  spectrum.level(level);
  ReviewCase c = get_case(id);
  if (c.status == CaseStatus::kDecided) throw Error(ErrorCode::kConflict, "review case " + id + " already decided");

  // Compare-and-swap: whoever creates the marker owns the transition,
  // across threads and processes alike.
  const auto marker = root_ / "cases" / (id + ".decided");
  const int fd = ::open(marker.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw Error(ErrorCode::kConflict, "review case " + id + " already decided");
    throw Error(ErrorCode::kStorageUnavailable, "cannot write " + marker.string());
  }
  ::close(fd);

  c.status = CaseStatus::kDecided;
  c.decision = ModeratorDecision{level, std::move(rationale), std::move(decided_at)};
  c.feedback_log_entry = "feedback.jsonl#" + id;

  json entry = {{"case_id", c.id},
                {"doc_id", c.doc_id},
                {"dike_level", c.dike_level},
                {"eris_level", c.eris_level},
                {"decided_level", level},
                {"decided_label", spectrum.level(level).label},
                {"rationale", c.decision->rationale},
                {"decided_at", c.decision->decided_at},
                {"transcript_ref", c.transcript_ref}};
  {
    std::lock_guard guard(lock_for("feedback.jsonl"));
    const std::string line = entry.dump() + "\n";
    const auto path = root_ / "feedback.jsonl";
    const int lfd = ::open(path.c_str(), O_CREAT | O_APPEND | O_WRONLY, 0644);
    if (lfd < 0 || ::write(lfd, line.data(), line.size()) != static_cast<ssize_t>(line.size())) {
      if (lfd >= 0) ::close(lfd);
      throw Error(ErrorCode::kStorageUnavailable, "cannot append to " + path.string());
    }
    ::close(lfd);
  }
  write(fs::path("cases") / (id + ".json"), "review_case", c);
  return c;
}

}  // namespace dike
