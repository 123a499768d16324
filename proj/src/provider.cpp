#include "dike/provider.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dike/text.hpp"

namespace dike {

using nlohmann::json;

namespace {

std::string format_delta(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", delta);
  return buf;
}

void append_field(std::string& out, std::string_view name, std::string_view value) {
  out.append(name);
  out.push_back(':');
  out.append(std::to_string(value.size()));
  out.push_back(':');
  out.append(value);
  out.push_back('\n');
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kRewriter: return "rewriter";
    case Role::kEmotionAnalyst: return "emotion_analyst";
    case Role::kDikeAgent: return "dike_agent";
    case Role::kEris: return "eris_agent";
    case Role::kConciliator: return "conciliator";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::kRewriter, Role::kEmotionAnalyst, Role::kDikeAgent, Role::kEris,
                 Role::kConciliator}) {
    if (to_string(r) == name) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown role " + std::string(name), "$.role");
}

bool is_debate_role(Role role) {
  return role == Role::kDikeAgent || role == Role::kEris || role == Role::kConciliator;
}

void ProviderRequest::validate() const {
  if (text::trim(prompt).empty()) {
    throw Error(ErrorCode::kInvalidArgument, "prompt must be non-empty", "$.prompt");
  }
  if (is_debate_role(role) != contentiousness.has_value()) {
    throw Error(ErrorCode::kInvalidArgument,
                "contentiousness must be set exactly for debate agents and the conciliator",
                "$.contentiousness");
  }
  if (contentiousness && !(*contentiousness > 0.0 && *contentiousness <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "contentiousness must lie in (0, 1]",
                "$.contentiousness");
  }
}

std::string fingerprint(const ProviderRequest& request) {
  std::string canon;
  append_field(canon, "role", to_string(request.role));
  append_field(canon, "stance",
               request.stance ? text::normalize_whitespace(*request.stance) : std::string("\x01"));
  append_field(canon, "delta",
               request.contentiousness ? format_delta(*request.contentiousness) : "-");
  append_field(canon, "prompt", text::normalize_whitespace(request.prompt));
  for (const auto& segment : request.context) {
    append_field(canon, "context", text::normalize_whitespace(segment));
  }
  return text::sha256_hex(canon);
}

std::string request_digest(const ProviderRequest& request) {
  std::string out(to_string(request.role));
  out += " stance=" + (request.stance ? text::normalize_whitespace(*request.stance) : "-");
  out += " delta=" + (request.contentiousness ? format_delta(*request.contentiousness) : "-");
  out += " context=" + std::to_string(request.context.size());
  auto prompt = text::normalize_whitespace(request.prompt);
  if (prompt.size() > 72) prompt = prompt.substr(0, 72) + "...";
  out += " prompt=" + prompt;
  return out;
}

// --- Cassette -------------------------------------------------------------

Cassette Cassette::parse(std::string_view content, const std::string& origin) {
  Cassette cassette;
  const auto lines = text::split_lines(content);
  if (lines.empty()) {
    throw Error(ErrorCode::kCassetteCorrupt, origin + ": missing header line");
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto where = origin + ":" + std::to_string(i + 1);
    if (text::trim(lines[i]).empty()) continue;
    json line;
    try {
      line = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCassetteCorrupt, where + ": " + e.what());
    }
    if (i == 0) {
      if (!line.is_object() || line.value("cassette_version", 0) != kVersion) {
        throw Error(ErrorCode::kCassetteCorrupt, where + ": bad or unsupported header");
      }
      if (line.contains("params")) {
        cassette.params_ = line.at("params").get<std::map<std::string, std::string>>();
      }
      continue;
    }
    if (!line.is_object() || !line.contains("fingerprint") || !line["fingerprint"].is_string() ||
        !line.contains("text") || !line["text"].is_string()) {
      throw Error(ErrorCode::kCassetteCorrupt, where + ": entry needs fingerprint and text");
    }
    CassetteEntry entry;
    entry.fingerprint = line["fingerprint"].get<std::string>();
    entry.request_digest = line.value("request_digest", "");
    entry.text = line["text"].get<std::string>();
    entry.refusal = line.value("refusal", false);
    cassette.add(std::move(entry));
  }
  return cassette;
}

Cassette Cassette::load(const std::string& path) { return parse(text::read_file(path), path); }

const CassetteEntry* Cassette::find(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string Cassette::header_line(const std::map<std::string, std::string>& params) {
  json header = {{"cassette_version", kVersion}, {"params", params}};
  return header.dump();
}

std::string Cassette::entry_line(const CassetteEntry& entry) {
  json line = {{"fingerprint", entry.fingerprint},
               {"request_digest", entry.request_digest},
               {"text", entry.text}};
  if (entry.refusal) line["refusal"] = true;
  return line.dump();
}

// --- Replay ---------------------------------------------------------------

std::shared_ptr<ReplayProvider> ReplayProvider::open(const std::string& path) {
  return std::make_shared<ReplayProvider>(Cassette::load(path));
}

ProviderResponse ReplayProvider::complete(const ProviderRequest& request) {
  request.validate();
  auto fp = fingerprint(request);
  const auto* entry = cassette_.find(fp);
  if (entry == nullptr) {
    throw Error(ErrorCode::kMissingFixture,
                "cassette has no entry for " + fp + " (" + request_digest(request) + ")");
  }
  if (entry->refusal) throw RefusalError(entry->text, fp);
  return {entry->text, {}, std::move(fp)};
}

// --- Record ---------------------------------------------------------------

RecordingProvider::RecordingProvider(std::shared_ptr<Provider> inner, std::string path,
                                     std::map<std::string, std::string> params)
    : inner_(std::move(inner)), path_(std::move(path)) {
  if (!inner_) throw Error(ErrorCode::kConfig, "record mode needs a backend");
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::exists(path_, ec) && fs::file_size(path_, ec) > 0) {
    const auto existing = Cassette::load(path_);
    for (const auto& [fp, entry] : existing.entries()) seen_.insert(fp);
    return;
  }
  if (fs::path(path_).has_parent_path()) fs::create_directories(fs::path(path_).parent_path(), ec);
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kStorageUnavailable, "cannot create cassette " + path_);
  out << Cassette::header_line(params) << '\n';
}

ProviderResponse RecordingProvider::complete(const ProviderRequest& request) {
  request.validate();
  const auto fp = fingerprint(request);
  try {
    auto response = inner_->complete(request);
    response.fingerprint = fp;
    append({fp, request_digest(request), response.text, false});
    return response;
  } catch (const RefusalError& refusal) {
    append({fp, request_digest(request), refusal.what(), true});
    throw RefusalError(refusal.what(), fp);
  }
}

void RecordingProvider::append(const CassetteEntry& entry) {
  std::lock_guard lock(mutex_);
  if (!seen_.insert(entry.fingerprint).second) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::kStorageUnavailable, "cannot append to cassette " + path_);
  out << Cassette::entry_line(entry) << '\n';
}

std::size_t RecordingProvider::recorded() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

ProviderResponse CallbackProvider::complete(const ProviderRequest& request) {
  request.validate();
  auto response = fn_(request);
  response.fingerprint = fingerprint(request);
  return response;
}

}  // namespace dike
