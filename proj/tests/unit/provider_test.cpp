#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "dike/provider.hpp"
#include "dike/text.hpp"

namespace fs = std::filesystem;
using namespace dike;

namespace {

ProviderRequest analyst(std::string prompt) {
  ProviderRequest r;
  r.role = Role::kEmotionAnalyst;
  r.prompt = std::move(prompt);
  return r;
}

ProviderRequest dike_turn(double delta, std::string prompt = "defend your stance") {
  ProviderRequest r;
  r.role = Role::kDikeAgent;
  r.stance = "Wistfulness";
  r.contentiousness = delta;
  r.prompt = std::move(prompt);
  return r;
}

// Echoes the prompt, counts calls.
class Echo : public Provider {
 public:
  ProviderResponse complete(const ProviderRequest& r) override {
    ++calls;
    if (r.prompt.find("forbidden") != std::string::npos) throw RefusalError("declined", "");
    return {"echo:" + r.prompt, {}, ""};
  }
  std::string_view provenance() const override { return "echo"; }
  std::atomic<int> calls{0};
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dike-prov-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t line_count(const fs::path& p) {
  return text::split_lines(text::read_file(p.string())).size();
}

}  // namespace

TEST(Fingerprint, DeterministicAndWhitespaceInsensitive) {
  auto a = analyst("Top 5 emotions of:\n\n  dear  heart ");
  auto b = analyst("Top 5 emotions of: dear heart");
  EXPECT_EQ(fingerprint(a), fingerprint(a));
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_EQ(fingerprint(a).size(), 64u);
  b.prompt += "!";
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Fingerprint, ParamsExcludedContextIncluded) {
  auto a = analyst("x");
  auto b = a;
  b.params["temperature"] = "0.7";
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b.context.push_back("earlier argument");
  EXPECT_NE(fingerprint(a), fingerprint(b));
  // Segment boundaries matter.
  auto c = a, d = a;
  c.context = {"ab", "c"};
  d.context = {"a", "bc"};
  EXPECT_NE(fingerprint(c), fingerprint(d));
}

TEST(Fingerprint, ContentiousnessRoundedToFourDecimals) {
  EXPECT_EQ(fingerprint(dike_turn(0.75001)), fingerprint(dike_turn(0.75004)));
  EXPECT_NE(fingerprint(dike_turn(0.75)), fingerprint(dike_turn(0.7501)));
  auto other = dike_turn(0.75);
  other.role = Role::kEris;
  EXPECT_NE(fingerprint(dike_turn(0.75)), fingerprint(other));
  other = dike_turn(0.75);
  other.stance = "Longing";
  EXPECT_NE(fingerprint(dike_turn(0.75)), fingerprint(other));
}

TEST(ProviderRequest, Validation) {
  EXPECT_NO_THROW(analyst("x").validate());
  EXPECT_NO_THROW(dike_turn(1.0).validate());
  auto expect_field = [](const ProviderRequest& r, const std::string& field) {
    try {
      r.validate();
      FAIL() << "expected failure on " << field;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
      EXPECT_EQ(e.field(), field);
    }
  };
  expect_field(analyst("   "), "$.prompt");
  auto r = analyst("x");
  r.contentiousness = 0.5;
  expect_field(r, "$.contentiousness");
  auto d = dike_turn(0.5);
  d.contentiousness.reset();
  expect_field(d, "$.contentiousness");
  expect_field(dike_turn(0.0), "$.contentiousness");
  expect_field(dike_turn(1.5), "$.contentiousness");
}

TEST(Roles, RoundTripNames) {
  for (auto role : {Role::kRewriter, Role::kEmotionAnalyst, Role::kDikeAgent, Role::kEris,
                    Role::kConciliator}) {
    EXPECT_EQ(role_from_string(to_string(role)), role);
  }
  EXPECT_EQ(to_string(Role::kEris), "eris_agent");
  EXPECT_THROW(role_from_string("oracle"), Error);
}

TEST(Cassette, RecordThreeCallsThenReplay) {
  TempDir dir;
  const auto path = (dir.path / "c.jsonl").string();
  auto echo = std::make_shared<Echo>();
  {
    RecordingProvider rec(echo, path, {{"model", "sim"}});
    rec.complete(analyst("one"));
    rec.complete(analyst("two"));
    rec.complete(dike_turn(0.9));
    rec.complete(analyst("one"));  // same fingerprint, not appended again
    EXPECT_EQ(rec.recorded(), 3u);
  }
  EXPECT_EQ(line_count(path), 4u);  // header + 3 entries
  const auto cassette = Cassette::load(path);
  EXPECT_EQ(cassette.size(), 3u);
  EXPECT_EQ(cassette.params().at("model"), "sim");

  ReplayProvider replay(cassette);
  const int before = echo->calls;
  EXPECT_EQ(replay.complete(analyst("  one ")).text, "echo:one");
  EXPECT_EQ(replay.complete(dike_turn(0.90001)).text, "echo:defend your stance");
  EXPECT_EQ(echo->calls, before);
  try {
    replay.complete(analyst("never seen"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingFixture);
  }
}

TEST(Cassette, RecorderResumesExistingFile) {
  TempDir dir;
  const auto path = (dir.path / "c.jsonl").string();
  auto echo = std::make_shared<Echo>();
  {
    RecordingProvider rec(echo, path);
    rec.complete(analyst("one"));
  }
  {
    RecordingProvider rec(echo, path);
    rec.complete(analyst("one"));
    rec.complete(analyst("two"));
  }
  EXPECT_EQ(Cassette::load(path).size(), 2u);
  EXPECT_EQ(line_count(path), 3u);
}

TEST(Cassette, ConcurrentRecordingKeepsEveryLine) {
  TempDir dir;
  const auto path = (dir.path / "c.jsonl").string();
  auto echo = std::make_shared<Echo>();
  RecordingProvider rec(echo, path);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) rec.complete(analyst("p" + std::to_string(t * 25 + i)));
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(Cassette::load(path).size(), 100u);
}

TEST(Cassette, RefusalRoundTrip) {
  TempDir dir;
  const auto path = (dir.path / "c.jsonl").string();
  auto echo = std::make_shared<Echo>();
  std::string recorded_fp;
  {
    RecordingProvider rec(echo, path);
    try {
      rec.complete(analyst("forbidden text"));
      FAIL();
    } catch (const RefusalError& e) {
      recorded_fp = e.fingerprint();
    }
  }
  EXPECT_EQ(recorded_fp, fingerprint(analyst("forbidden text")));
  ReplayProvider replay(Cassette::load(path));
  try {
    replay.complete(analyst("forbidden text"));
    FAIL();
  } catch (const RefusalError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRefusal);
    EXPECT_EQ(e.fingerprint(), recorded_fp);
  }
}

TEST(Cassette, CorruptInputs) {
  auto code_of = [](std::string_view content) {
    try {
      Cassette::parse(content);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  const std::string header = Cassette::header_line({});
  EXPECT_EQ(code_of(header + "\n{not json\n"), ErrorCode::kCassetteCorrupt);
  EXPECT_EQ(code_of("{\"cassette_version\":99,\"params\":{}}\n"), ErrorCode::kCassetteCorrupt);
  EXPECT_EQ(code_of(header + "\n{\"fingerprint\":\"x\"}\n"), ErrorCode::kCassetteCorrupt);
  EXPECT_EQ(code_of(""), ErrorCode::kCassetteCorrupt);
  EXPECT_NO_THROW(Cassette::parse(header + "\n\n"));
  try {
    Cassette::load("/nonexistent/dir/c.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.code(), ErrorCode::kInternal);
  }
}

TEST(Cassette, EntryLineRoundTrip) {
  CassetteEntry e{"abc", "analyst: ...", "Love, Joy\nwith \"quotes\"", false};
  auto c = Cassette::parse(Cassette::header_line({{"k", "v"}}) + "\n" + Cassette::entry_line(e));
  ASSERT_NE(c.find("abc"), nullptr);
  EXPECT_EQ(c.find("abc")->text, e.text);
  EXPECT_FALSE(c.find("abc")->refusal);
}

TEST(CallbackProvider, AttachesFingerprint) {
  CallbackProvider p([](const ProviderRequest& r) { return ProviderResponse{r.prompt, {}, ""}; },
                     "host");
  auto res = p.complete(analyst("hello"));
  EXPECT_EQ(res.text, "hello");
  EXPECT_EQ(res.fingerprint, fingerprint(analyst("hello")));
  EXPECT_EQ(p.provenance(), "host");
}

// --- HttpBackend against a local server ---------------------------------

class MockServer {
 public:
  MockServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      res.status = status;
      res.set_content(reply, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  int status = 200;
  std::string reply;
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpBackend, CompletionAndRequestShape) {
  MockServer mock;
  mock.reply = R"({"choices":[{"message":{"role":"assistant","content":"Love, Joy"},
                   "finish_reason":"stop"}],"usage":{"total_tokens":12}})";
  HttpBackend backend({mock.url(), "secret", "test-model"});
  auto req = dike_turn(0.75);
  req.context = {"opponent said this"};
  req.params["temperature"] = "0.2";
  const auto res = backend.complete(req);
  EXPECT_EQ(res.text, "Love, Joy");
  EXPECT_EQ(res.usage.at("total_tokens"), 12);
  EXPECT_EQ(res.fingerprint, fingerprint(req));
  EXPECT_EQ(mock.last_auth, "Bearer secret");

  const auto body = nlohmann::json::parse(mock.last_body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  ASSERT_EQ(body["messages"].size(), 3u);
  const auto system = body["messages"][0]["content"].get<std::string>();
  EXPECT_NE(system.find("Stance: Wistfulness"), std::string::npos);
  EXPECT_NE(system.find("Contentiousness: 0.7500"), std::string::npos);
  EXPECT_EQ(body["messages"][1]["content"], "opponent said this");
  EXPECT_EQ(body["messages"][2]["content"], "defend your stance");
}

TEST(HttpBackend, RefusalsAndFailures) {
  MockServer mock;
  HttpBackend backend({mock.url(), "", "m"});
  auto code_of = [&] {
    try {
      backend.complete(analyst("x"));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  mock.reply = R"({"choices":[{"message":{"content":""},"finish_reason":"content_filter"}]})";
  EXPECT_EQ(code_of(), ErrorCode::kRefusal);
  mock.reply = R"({"choices":[{"message":{"content":null,"refusal":"I can't help"}}]})";
  EXPECT_EQ(code_of(), ErrorCode::kRefusal);
  mock.status = 400;
  mock.reply = R"({"error":{"code":"content_policy_violation","message":"no"}})";
  EXPECT_EQ(code_of(), ErrorCode::kRefusal);
  mock.status = 500;
  mock.reply = R"({"error":{"code":"server_error"}})";
  EXPECT_EQ(code_of(), ErrorCode::kBackendUnavailable);
  mock.status = 200;
  mock.reply = "not json";
  EXPECT_EQ(code_of(), ErrorCode::kBackendUnavailable);
  mock.reply = R"({"choices":[]})";
  EXPECT_EQ(code_of(), ErrorCode::kBackendUnavailable);
}

TEST(HttpBackend, UnreachableAndUnconfigured) {
  EXPECT_THROW(HttpBackend(HttpBackendConfig{}), Error);
  HttpBackendConfig cfg{"http://127.0.0.1:1", "", "m"};
  cfg.timeout_seconds = 1;
  HttpBackend backend(cfg);
  try {
    backend.complete(analyst("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendUnavailable);
  }
}
