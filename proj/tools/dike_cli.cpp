// dike: command-line front end over libdike.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dike/dike.h"

using nlohmann::json;

namespace {

struct Globals {
  std::string data_dir;
  std::string provider;
  std::string cassette;
  std::string policy_file;
  std::string debate_file;
  std::optional<int> top_m;
  std::string api_token;
};

// Exit codes are the dike_status values; 64 covers usage and local I/O.
constexpr int kUsage = 64;

int fail_local(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
  return kUsage;
}

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json config_json(const Globals& g) {
  json c = json::object();
  if (!g.data_dir.empty()) c["data_dir"] = g.data_dir;
  if (!g.provider.empty()) c["provider"] = g.provider;
  if (!g.cassette.empty()) c["cassette"] = g.cassette;
  if (g.top_m) c["top_m"] = *g.top_m;
  if (!g.api_token.empty()) c["api_token"] = g.api_token;
  if (!g.policy_file.empty()) {
    auto text = slurp(g.policy_file);
    if (!text) throw std::runtime_error("cannot read " + g.policy_file);
    c["policy"] = json::parse(*text);
  }
  if (!g.debate_file.empty()) {
    auto text = slurp(g.debate_file);
    if (!text) throw std::runtime_error("cannot read " + g.debate_file);
    c["debate"] = json::parse(*text);
  }
  return c;
}

class Session {
 public:
  explicit Session(const Globals& g) : config_(config_json(g).dump()) {}
  ~Session() { dike_engine_close(engine_); }

  // Opens the engine lazily so stateless commands work without a cassette.
  int open() {
    if (engine_ != nullptr) return 0;
    const dike_status st = dike_engine_open(config_.c_str(), nullptr, &engine_);
    if (st != DIKE_OK) {
      std::cerr << dike_last_error() << "\n";
      return st;
    }
    return 0;
  }

  dike_engine* engine() const { return engine_; }

  // Runs op and prints the response; returns the exit code.
  int call(const char* op, const json& request, bool need_engine = true, json* response = nullptr) {
    if (need_engine) {
      if (int rc = open()) return rc;
    }
    char* out = nullptr;
    const dike_status st = dike_call(engine_, op, request.dump().c_str(), &out);
    const std::string text = out != nullptr ? out : "";
    dike_string_free(out);
    if (st != DIKE_OK) {
      std::cerr << text << "\n";
      return st;
    }
    if (response != nullptr) {
      *response = json::parse(text);
    } else {
      std::cout << text << "\n";
    }
    return 0;
  }

 private:
  std::string config_;
  dike_engine* engine_ = nullptr;
};

dike_engine* g_serving = nullptr;

void on_signal(int) {
  if (g_serving != nullptr) dike_stop(g_serving);
}

void on_bound(void*, int port) {
  std::cerr << json{{"listening", port}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dike: emotion guardrails with an adversarial review loop"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--data-dir", g.data_dir, "data directory (DIKE_DATA_DIR)");
  app.add_option("--provider", g.provider, "live | replay | record (DIKE_PROVIDER)")
      ->check(CLI::IsMember({"live", "replay", "record"}));
  app.add_option("--cassette", g.cassette, "cassette file for replay/record (DIKE_CASSETTE)");
  app.add_option("--policy", g.policy_file, "guardrail policy JSON (DIKE_POLICY)");
  app.add_option("--debate-config", g.debate_file, "debate config JSON (DIKE_DEBATE_CONFIG)");
  app.add_option("--api-token", g.api_token, "bearer token for serve (DIKE_API_TOKEN)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load documents into the data directory");
  std::string input, format = "jsonl";
  ingest->add_option("--input", input, "JSONL file or directory of .txt letters")->required();
  ingest->add_option("--format", format)->check(CLI::IsMember({"jsonl", "dir"}));

  // train
  auto* train = app.add_subcommand("train", "rewrite, analyse and build the behavior matrix");
  std::string spectrum = "love-letter";
  int top_m = 5;
  std::string train_input;
  train->add_option("--spectrum", spectrum)->check(CLI::IsMember({"love-letter"}));
  train->add_option("--top-m", top_m)->check(CLI::PositiveNumber);
  train->add_option("--input", train_input, "documents to ingest first (JSONL)");

  // classify
  auto* classify = app.add_subcommand("classify", "classify one document or a JSONL batch");
  std::string doc;
  std::string batch;
  auto* doc_opt = classify->add_option("--doc", doc, "text file");
  auto* batch_opt = classify->add_option("--input", batch, "JSONL documents; prints one prediction per line");
  doc_opt->excludes(batch_opt);

  // guard
  auto* guard = app.add_subcommand("guard", "check a document against the guardrail");
  std::string range;
  guard->add_option("--doc", doc)->required();
  guard->add_option("--range", range, "acceptable levels, e.g. 4:7");

  // rectify
  auto* rectify = app.add_subcommand("rectify", "rewrite a violating document into range");
  int max_iters = 3;
  rectify->add_option("--doc", doc)->required();
  rectify->add_option("--range", range);
  rectify->add_option("--max-iters", max_iters)->check(CLI::PositiveNumber);

  // debate
  auto* debate = app.add_subcommand("debate", "run the checks-and-balances review (prints the schedule)");
  double delta0 = 0.9, damping = 1.2, floor = 0.1;
  bool socrasynth = false, crit = false;
  int tolerance = 1;
  std::string dike_level, eris_level;
  debate->add_option("--doc", doc, "text file; without it only the schedule is printed");
  debate->add_option("--delta0", delta0);
  debate->add_option("--damping", damping);
  debate->add_option("--floor", floor);
  debate->add_option("--tolerance", tolerance, "level gap tolerated after conciliation");
  debate->add_flag("--socrasynth", socrasynth);
  debate->add_flag("--crit", crit, "stop early when argument quality drops (needs a scorer)");
  debate->add_option("--dike-level", dike_level, "override DIKE's level (index or label)");
  debate->add_option("--eris-level", eris_level, "override ERIS's level (index or label)");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy and entropy of predictions against ground truth");
  std::string predictions, truth;
  eval->add_option("--predictions", predictions, "JSONL/JSON of {doc_id, level}")->required();
  eval->add_option("--truth", truth, "annotation CSV or ground-truth JSON")->required();

  // ground-truth
  auto* gt = app.add_subcommand("ground-truth", "merge annotation CSV into ground truth");
  std::string annotations;
  int min_sources = 1;
  gt->add_option("--annotations", annotations)->required();
  gt->add_option("--min-sources", min_sources)->check(CLI::PositiveNumber);

  // export-heatmap
  auto* heatmap = app.add_subcommand("export-heatmap", "write the level x emotion grid as CSV");
  std::string out_path;
  heatmap->add_option("--out", out_path)->required();

  // reviews
  auto* reviews = app.add_subcommand("reviews", "list, show or decide escalated cases");
  std::string status, case_id, rationale, level;
  auto* r_list = reviews->add_subcommand("list");
  r_list->add_option("--status", status)->check(CLI::IsMember({"open", "decided"}));
  auto* r_show = reviews->add_subcommand("show");
  r_show->add_option("id", case_id)->required();
  auto* r_decide = reviews->add_subcommand("decide");
  r_decide->add_option("id", case_id)->required();
  r_decide->add_option("--level", level)->required();
  r_decide->add_option("--rationale", rationale);
  reviews->require_subcommand(1);

  auto* spectra = app.add_subcommand("spectra", "print the behavior spectra");

  // serve
  auto* serve = app.add_subcommand("serve", "serve the /v1 HTTP API");
  int port = -1;
  std::string host = "127.0.0.1", static_dir;
  serve->add_option("--port", port, "default DIKE_PORT or 8080");
  serve->add_option("--host", host);
  serve->add_option("--static", static_dir, "directory of console assets to serve at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail_local("UsageError", e.what());
  }

  if (train->parsed()) g.top_m = top_m;

  std::optional<Session> session;
  try {
    session.emplace(g);
  } catch (const std::exception& e) {
    return fail_local("ConfigError", e.what());
  }

  auto read_doc = [&](json& req) -> int {
    auto text = slurp(doc);
    if (!text) return fail_local("StorageUnavailable", "cannot read " + doc);
    req["text"] = *text;
    return 0;
  };

  if (spectra->parsed()) return session->call("spectra", json::object(), false);

  if (ingest->parsed()) return session->call("ingest", {{"input", input}, {"format", format}});

  if (train->parsed()) {
    json req = {{"top_m", top_m}};
    if (!train_input.empty()) req["input"] = train_input;
    return session->call("train", req);
  }

  if (classify->parsed()) {
    if (!batch.empty()) {
      auto text = slurp(batch);
      if (!text) return fail_local("StorageUnavailable", "cannot read " + batch);
      std::istringstream lines(*text);
      std::string line;
      std::size_t n = 0;
      while (std::getline(lines, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json d;
        try {
          d = json::parse(line);
        } catch (const json::exception&) {
          return fail_local("ParseError", batch + ":" + std::to_string(n) + ": malformed JSON");
        }
        json res;
        if (int rc = session->call("classify", {{"text", d.value("text", "")}}, true, &res)) return rc;
        std::cout << json{{"doc_id", d.value("id", "")}, {"level", res["level"]}, {"label", res["label"]}}.dump()
                  << "\n";
      }
      return 0;
    }
    if (doc.empty()) return fail_local("UsageError", "classify needs --doc or --input");
    json req;
    if (int rc = read_doc(req)) return rc;
    return session->call("classify", req);
  }

  if (guard->parsed() || rectify->parsed()) {
    json req;
    if (int rc = read_doc(req)) return rc;
    if (!range.empty()) req["policy"] = range;
    if (rectify->parsed()) {
      req["max_iters"] = max_iters;
      return session->call("rectify", req);
    }
    return session->call("guard", req);
  }

  if (debate->parsed()) {
    json cfg = {{"delta0", delta0},
                {"damping", damping},
                {"floor", floor},
                {"variant", socrasynth ? "socrasynth" : "dike_eris"},
                {"crit_enabled", crit},
                {"tolerance_levels", tolerance}};
    json schedule;
    if (int rc = session->call("schedule", {{"config", cfg}}, false, &schedule)) return rc;
    if (doc.empty()) {
      std::cout << schedule.dump() << "\n";
      return 0;
    }
    json req = {{"config", cfg}};
    if (int rc = read_doc(req)) return rc;
    if (!dike_level.empty()) req["dike_level"] = dike_level;
    if (!eris_level.empty()) req["eris_level"] = eris_level;
    json outcome;
    if (int rc = session->call("debate", req, true, &outcome)) return rc;
    outcome["schedule"] = schedule["schedule"];
    std::cout << outcome.dump() << "\n";
    return 0;
  }

  if (eval->parsed()) return session->call("eval", {{"predictions", predictions}, {"truth", truth}});

  if (gt->parsed()) return session->call("ground_truth", {{"annotations", annotations}, {"min_sources", min_sources}});

  if (heatmap->parsed()) {
    json res;
    if (int rc = session->call("heatmap", json::object(), true, &res)) return rc;
    std::ofstream out(out_path, std::ios::binary);
    if (!(out << res["csv"].get<std::string>())) return fail_local("StorageUnavailable", "cannot write " + out_path);
    std::cout << json{{"written", out_path}}.dump() << "\n";
    return 0;
  }

  if (reviews->parsed()) {
    if (r_list->parsed()) {
      json req = json::object();
      if (!status.empty()) req["status"] = status;
      return session->call("reviews.list", req);
    }
    if (r_show->parsed()) return session->call("reviews.get", {{"id", case_id}});
    return session->call("reviews.decide", {{"id", case_id}, {"level", level}, {"rationale", rationale}});
  }

  if (serve->parsed()) {
    if (int rc = session->open()) return rc;
    if (port < 0) {
      json st;
      if (int rc = session->call("status", json::object(), true, &st)) return rc;
      port = st["config"]["port"].get<int>();
    }
    g_serving = session->engine();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const dike_status st = dike_serve(session->engine(), host.c_str(), port,
                                      static_dir.empty() ? nullptr : static_dir.c_str(), on_bound, nullptr);
    g_serving = nullptr;
    if (st != DIKE_OK) {
      std::cerr << dike_last_error() << "\n";
      return st;
    }
    return 0;
  }
  return fail_local("UsageError", "no command");
}
