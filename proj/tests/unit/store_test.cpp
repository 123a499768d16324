#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "dike/error.hpp"
#include "dike/serialize.hpp"
#include "dike/store.hpp"
#include "dike/text.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace dike;
using nlohmann::json;
using sim::TempDir;

namespace {

const BehaviorSpectrum& love() { return BehaviorSpectrum::bundled(); }

void write(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dike::Error thrown";
  return ErrorCode::kInternal;
}

BehaviorMatrix sample_matrix(double tilt) {
  std::vector<BehaviorMatrix::Row> rows;
  for (int l = 1; l <= 7; ++l) {
    BehaviorMatrix::Row r;
    r.profile = EmotionProfile({{"Joy", 1.0 + tilt * l}, {"Grief", 8.0 - l}, {"Love", 1.0 / 3.0}});
    r.support = 10 + l;
    r.presence = {{"Joy", l}, {"Grief", 8 - l}};
    rows.push_back(r);
  }
  return BehaviorMatrix("love-letter", rows);
}

ReviewCase sample_case(const std::string& id) {
  ReviewCase c;
  c.id = id;
  c.doc_id = "doc-1";
  c.doc_excerpt = "There would have been the making of an accomplished flirt in me";
  c.dike_level = 3;
  c.eris_level = 7;
  c.transcript_ref = "transcripts/" + id + ".json";
  c.opened_at = "2026-01-02T03:04:05Z";
  return c;
}

}  // namespace

// --- ids and ingest ----------------------------------------------------------

TEST(DocumentId, DeterministicAndWhitespaceInsensitive) {
  const auto a = document_id("My dearest,\n  I write again.");
  EXPECT_EQ(a, document_id("My dearest, I write again."));
  EXPECT_EQ(a, document_id("  My dearest, I write again.\n"));
  EXPECT_NE(a, document_id("My dearest, I write again!"));
  ASSERT_EQ(a.size(), 4u + 12u);
  EXPECT_EQ(a.substr(0, 4), "doc-");
  EXPECT_EQ(a.substr(4), text::sha256_hex("My dearest, I write again.").substr(0, 12));
}

TEST(Ingest, DirectoryOfThreeLetters) {
  TempDir dir("ingest");
  write(dir.path / "a.txt", "First letter.");
  write(dir.path / "b.txt", "Second letter.\n");
  write(dir.path / "c.txt", "Third letter.");
  std::vector<std::string> warnings;
  const auto docs = ingest(dir.path, IngestFormat::kDirectory, &warnings);
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(docs[1].text, "Second letter.");
  EXPECT_EQ(docs[1].source, "b.txt");
  EXPECT_EQ(docs[1].id, document_id("Second letter."));
}

TEST(Ingest, DuplicateTextDedupedWithWarning) {
  std::vector<std::string> warnings;
  const auto docs = parse_jsonl_documents(
      "{\"text\": \"Same words.\"}\n{\"text\": \"Other words.\"}\n{\"text\": \"Same   words.\"}\n",
      "letters.jsonl", &warnings);
  ASSERT_EQ(docs.size(), 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("letters.jsonl:3"), std::string::npos);
  EXPECT_EQ(docs[0].id, document_id("Same words."));
}

TEST(Ingest, JsonlKeepsGivenIdsAndMetadata) {
  const auto docs = parse_jsonl_documents(
      R"({"id": "L-07", "text": "x y", "source": "kaggle", "metadata": {"split": "test", "n": 3}})",
      "f");
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].id, "L-07");
  EXPECT_EQ(docs[0].source, "kaggle");
  EXPECT_EQ(docs[0].metadata.at("split"), "test");
  EXPECT_EQ(docs[0].metadata.at("n"), "3");
}

TEST(Ingest, MalformedLineNamesTheLine) {
  try {
    parse_jsonl_documents("{\"text\": \"ok\"}\n{\"text\": oops}\n", "in.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("in.jsonl:2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_jsonl_documents("{\"id\": \"x\"}\n", "f"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_jsonl_documents("{\"text\": \"   \"}\n", "f"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_jsonl_documents("{\"id\": \"../x\", \"text\": \"a\"}\n", "f"); }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([] {
              parse_jsonl_documents("{\"id\": \"x\", \"text\": \"a\"}\n{\"id\": \"x\", \"text\": \"b\"}\n", "f");
            }),
            ErrorCode::kParseError);
}

TEST(Ingest, MissingPath) {
  EXPECT_EQ(code_of([] { ingest("/nonexistent/dike/path", IngestFormat::kJsonl); }),
            ErrorCode::kStorageUnavailable);
  EXPECT_EQ(code_of([] { ingest_format_from_string("csv"); }), ErrorCode::kInvalidArgument);
}

// --- annotations -------------------------------------------------------------

TEST(Annotations, LabelsAliasesAndIndices) {
  const auto anns = parse_annotations_csv(
      "doc_id,annotator,label,rank\n"
      "d1,ann-a,Hopeful,1\n"
      "d1,ann-a,wistful,2\n"
      "d1,ann-b,5,1\n"
      "d1,\"ann, c\",Joyful,1\n",
      love());
  ASSERT_EQ(anns.size(), 4u);
  EXPECT_EQ(anns[0], (Annotation{"d1", "ann-a", 5, 1}));
  EXPECT_EQ(anns[1], (Annotation{"d1", "ann-a", 3, 2}));
  EXPECT_EQ(anns[2].level, 5);
  EXPECT_EQ(anns[3].annotator_id, "ann, c");
  EXPECT_EQ(anns[3].level, 7);
}

TEST(Annotations, ErrorsNameTheLine) {
  auto line_of = [](const std::string& csv) {
    try {
      parse_annotations_csv(csv, love(), "sheet.csv");
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParseError);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(line_of("doc_id,annotator,label,rank\nd1,a,Happiness,1\n").find("sheet.csv:2"), std::string::npos);
  EXPECT_NE(line_of("doc_id,annotator,label,rank\nd1,a,Hopeful,1\nd1,a,Hopeful,4\n").find("sheet.csv:3"),
            std::string::npos);
  EXPECT_NE(line_of("doc_id,annotator,label,rank\nd1,a,Hopeful,1\nd1,a,Joy,1\n").find("sheet.csv:3"),
            std::string::npos);
  EXPECT_NE(line_of("doc_id,annotator,label\n").find("missing column 'rank'"), std::string::npos);
  EXPECT_NE(line_of("doc_id,annotator,label,rank\nd1,a,Hopeful\n").find("sheet.csv:2"), std::string::npos);
}

// --- ground truth ------------------------------------------------------------

namespace {

std::vector<Annotation> triple(int a, int b, int c, std::string doc = "d") {
  return {{doc, "s1", a, 1}, {doc, "s2", b, 1}, {doc, "s3", c, 1}};
}

}  // namespace

TEST(GroundTruth, SpecExamples) {
  // 0.3 is level 5, -0.3 level 3, 0 level 4, -1 level 1, 1 level 7
  auto g = merge_ground_truth("d", triple(5, 5, 5), love());
  EXPECT_NEAR(g.mean_scalar, 0.3, 1e-15);
  EXPECT_EQ(g.stddev, 0.0);
  EXPECT_TRUE(g.accepted);
  EXPECT_EQ(g.level, 5);

  g = merge_ground_truth("d", triple(3, 4, 5), love());
  EXPECT_NEAR(g.stddev, 0.2449489742783178, 1e-12);
  EXPECT_TRUE(g.accepted);
  EXPECT_EQ(g.mean_scalar, 0.0);
  EXPECT_EQ(g.level, 4);

  g = merge_ground_truth("d", triple(1, 4, 7), love());
  EXPECT_NEAR(g.stddev, 0.816496580927726, 1e-12);
  EXPECT_FALSE(g.accepted);
  EXPECT_EQ(g.sources, (std::vector<std::string>{"s1", "s2", "s3"}));
  EXPECT_EQ(g.source_levels, (std::vector<int>{1, 4, 7}));
}

TEST(GroundTruth, OnlyRankOneCounts) {
  auto anns = triple(5, 5, 5);
  anns.push_back({"d", "s1", 1, 2});
  anns.push_back({"d", "s2", 7, 3});
  anns.push_back({"other", "s9", 1, 1});
  const auto g = merge_ground_truth("d", anns, love());
  EXPECT_EQ(g.stddev, 0.0);
  EXPECT_EQ(g.sources.size(), 3u);
}

TEST(GroundTruth, MissingSource) {
  const std::vector<Annotation> only_rank2 = {{"d", "s1", 5, 2}};
  EXPECT_EQ(code_of([&] { merge_ground_truth("d", only_rank2, love()); }), ErrorCode::kMissingSource);
  EXPECT_EQ(code_of([] { merge_ground_truth("d", triple(5, 5, 5), love(), 4); }), ErrorCode::kMissingSource);
  const std::vector<Annotation> none;
  EXPECT_EQ(code_of([&] { merge_ground_truth("d", none, love()); }), ErrorCode::kMissingSource);
}

TEST(GroundTruth, SingleSourceIsExact) {
  const std::vector<Annotation> one = {{"d", "s1", 2, 1}};
  const auto g = merge_ground_truth("d", one, love());
  EXPECT_EQ(g.mean_scalar, -0.6);
  EXPECT_EQ(g.stddev, 0.0);
  EXPECT_EQ(g.level, 2);
}

// Every triple of anchors against a brute-force oracle that works in integer
// tenths: 9 * 100 * var = 3 * sum(k^2) - (sum k)^2.
TEST(GroundTruth, ExhaustiveTripleGrid) {
  const int tenths[] = {-10, -6, -3, 0, 3, 6, 10};
  int accepted = 0;
  for (int a = 1; a <= 7; ++a) {
    for (int b = 1; b <= 7; ++b) {
      for (int c = 1; c <= 7; ++c) {
        const int ka = tenths[a - 1], kb = tenths[b - 1], kc = tenths[c - 1];
        const int s = ka + kb + kc;
        const int q = ka * ka + kb * kb + kc * kc;
        const int scaled_var = 3 * q - s * s;  // 900 * var
        const double oracle_sd = std::sqrt(scaled_var / 900.0);
        const bool oracle_accept = scaled_var < 81;  // sd < 0.3  <=>  900 var < 81
        // nearest anchor to mean s/30, ties toward zero
        int best = 1;
        for (int l = 2; l <= 7; ++l) {
          const int d_new = std::abs(3 * tenths[l - 1] - s), d_old = std::abs(3 * tenths[best - 1] - s);
          if (d_new < d_old || (d_new == d_old && std::abs(tenths[l - 1]) < std::abs(tenths[best - 1]))) best = l;
        }
        const auto g = merge_ground_truth("d", triple(a, b, c), love());
        ASSERT_NEAR(g.stddev, oracle_sd, 1e-12) << a << b << c;
        ASSERT_EQ(g.accepted, oracle_accept) << a << b << c;
        ASSERT_EQ(g.accepted, g.stddev < 0.3);
        ASSERT_NEAR(g.mean_scalar, s / 30.0, 1e-15);
        ASSERT_EQ(g.level, best) << a << b << c;
        accepted += g.accepted;
      }
    }
  }
  EXPECT_GT(accepted, 7);  // more than just the unanimous triples
}

TEST(GroundTruth, MergeAllSortedByDoc) {
  auto anns = triple(5, 5, 5, "zeta");
  for (auto a : triple(1, 1, 2, "alpha")) anns.push_back(a);
  const auto all = merge_all(anns, love());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].doc_id, "alpha");
  EXPECT_EQ(all[1].doc_id, "zeta");
}

// --- persistence -------------------------------------------------------------

TEST(Store, RoundTripsEveryArtifact) {
  TempDir dir("store");
  Store store(dir.path);

  const auto m = sample_matrix(0.37);
  store.save_matrix(m);
  EXPECT_TRUE(store.has_matrix());
  EXPECT_EQ(store.load_matrix(), m);

  RewriteSet rs;
  rs.spectrum_id = "love-letter";
  rs.rewrites = {{"doc-1", 2, "longing text"}, {"doc-1", 7, "joyful text"}};
  rs.gaps = {{"doc-1", 1, "refused"}};
  store.save_rewrites(rs);
  EXPECT_EQ(store.load_rewrites(), rs);

  DocumentSet docs = {{"a", "alpha", "src", {{"k", "v"}}}, {"b", "beta", "", {}}};
  store.save_documents(docs);
  EXPECT_EQ(store.load_documents(), docs);

  const auto gt = merge_all(triple(1, 4, 7), love());
  store.save_ground_truth(gt);
  EXPECT_EQ(store.load_ground_truth(), gt);

  const json t = {{"entries", json::array({{{"agent", "dike"}, {"delta", 0.45}}})}};
  const auto ref = store.save_transcript("case-1", t);
  EXPECT_EQ(ref, "transcripts/case-1.json");
  EXPECT_EQ(store.load_transcript(ref), t);

  auto c = sample_case("case-1");
  store.create_case(c);
  EXPECT_EQ(store.get_case("case-1"), c);
}

TEST(Store, JsonRoundTripOfModuleTypes) {
  Classification cl;
  cl.level = 5;
  cl.scores = {{1, 0.1}, {5, 0.9}, {7, 1.0 / 3.0}};
  cl.profile = EmotionProfile({{"Hopeful", 2.0}, {"Love", 1.0}});
  const auto cl2 = json(cl).get<Classification>();
  EXPECT_EQ(cl2.level, cl.level);
  EXPECT_EQ(cl2.scores, cl.scores);
  EXPECT_EQ(cl2.profile, cl.profile);

  RectificationResult r;
  r.final_doc = "x";
  r.iterations = 2;
  r.verdicts = {{VerdictStatus::kViolation, 1, 3}, {VerdictStatus::kCompliant, 4, 0}};
  r.converged = true;
  r.final_classification = cl;
  r.last_plan = AdjustmentPlan{4, {{"Joy", 0.25}, {"Grief", -0.5}}, "toward 4"};
  const auto r2 = json(r).get<RectificationResult>();
  EXPECT_EQ(json(r2), json(r));

  DebateOutcome o;
  o.transcript = {{Agent::kEris, DebatePhase::kRounds, 2, 0.225, "t"}};
  o.consensus = Consensus{"joint", 3, 2};
  o.escalated = false;
  o.conciliator_reply = "{}";
  const auto o2 = json(o).get<DebateOutcome>();
  EXPECT_EQ(o2.transcript, o.transcript);
  EXPECT_EQ(o2.consensus, o.consensus);
  EXPECT_FALSE(o2.feedback_ref.has_value());

  DebateConfig cfg;
  cfg.damping = 3.0;
  cfg.variant = DebateVariant::kSocraSynth;
  cfg.crit_enabled = true;
  EXPECT_EQ(json(cfg).get<DebateConfig>(), cfg);

  EvaluationReport er{24, 17.0 / 24, 22.0 / 24, 2.5, {{1, 0}, {0, 1}}};
  EXPECT_EQ(json(json(er).get<EvaluationReport>()), json(er));
}

TEST(Store, SchemaVersionBumpIsRejected) {
  TempDir dir("schema");
  Store store(dir.path);
  store.save_matrix(sample_matrix(0.1));
  auto env = json::parse(text::read_file((dir.path / "matrix.json").string()));
  env["schema_version"] = Store::kSchemaVersion + 1;
  write(dir.path / "matrix.json", env.dump());
  EXPECT_EQ(code_of([&] { store.load_matrix(); }), ErrorCode::kSchemaMismatch);

  env["schema_version"] = Store::kSchemaVersion;
  env["kind"] = "rewrites";
  write(dir.path / "matrix.json", env.dump());
  EXPECT_EQ(code_of([&] { store.load_matrix(); }), ErrorCode::kSchemaMismatch);

  write(dir.path / "matrix.json", "{\"rows\": []}");
  EXPECT_EQ(code_of([&] { store.load_matrix(); }), ErrorCode::kSchemaMismatch);
  write(dir.path / "matrix.json", "{ not json");
  EXPECT_EQ(code_of([&] { store.load_matrix(); }), ErrorCode::kParseError);
}

TEST(Store, MissingArtifactsAndBadRefs) {
  TempDir dir("missing");
  Store store(dir.path);
  EXPECT_FALSE(store.has_matrix());
  EXPECT_EQ(code_of([&] { store.load_matrix(); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.get_case("nope"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.get_case("../matrix"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.load_transcript("../../etc/passwd"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.save_transcript("a/b", json::object()); }), ErrorCode::kInvalidArgument);
}

TEST(Store, UnwritableRootIsStorageUnavailable) {
  TempDir dir("ro");
  write(dir.path / "file", "x");
  EXPECT_EQ(code_of([&] { Store s(dir.path / "file" / "sub"); }), ErrorCode::kStorageUnavailable);
}

// A reader racing a writer only ever sees a complete old or new version.
TEST(Store, ConcurrentReadDuringWriteSeesWholeVersions) {
  TempDir dir("race");
  Store store(dir.path);
  const auto a = sample_matrix(0.0);
  const auto b = sample_matrix(5.0);
  store.save_matrix(a);

  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 0; i < 150; ++i) store.save_matrix(i % 2 ? a : b);
    done = true;
  });
  int reads = 0, torn = 0;
  while (!done || reads < 50) {
    const auto m = store.load_matrix();
    if (!(m == a) && !(m == b)) ++torn;
    ++reads;
  }
  writer.join();
  EXPECT_EQ(torn, 0);
  EXPECT_GE(reads, 50);
}

// Mid-write, the target still holds the old version: the new one goes to a
// temp file that only replaces it on rename.
TEST(Store, OldVersionVisibleUntilRename) {
  TempDir dir("rename");
  Store store(dir.path);
  const auto a = sample_matrix(0.0);
  store.save_matrix(a);
  const auto before = text::read_file((dir.path / "matrix.json").string());
  write(dir.path / "matrix.json.tmp.partial", Store::wrap("behavior_matrix", sample_matrix(5.0)).substr(0, 40));
  EXPECT_EQ(store.load_matrix(), a);
  EXPECT_EQ(text::read_file((dir.path / "matrix.json").string()), before);
}

// --- review cases ------------------------------------------------------------

TEST(ReviewCases, DecideOnceThenConflict) {
  TempDir dir("cases");
  Store store(dir.path);
  store.create_case(sample_case("c1"));
  store.create_case(sample_case("c2"));
  EXPECT_EQ(code_of([&] { store.create_case(sample_case("c1")); }), ErrorCode::kConflict);
  EXPECT_EQ(store.list_cases(CaseStatus::kOpen).size(), 2u);

  const auto decided = store.decide("c1", 5, "hopeful reading", love(), "2026-02-03T00:00:00Z");
  EXPECT_EQ(decided.status, CaseStatus::kDecided);
  ASSERT_TRUE(decided.decision.has_value());
  EXPECT_EQ(decided.decision->level, 5);
  EXPECT_EQ(decided.feedback_log_entry, "feedback.jsonl#c1");
  EXPECT_EQ(store.get_case("c1"), decided);

  EXPECT_EQ(code_of([&] { store.decide("c1", 4, "again", love()); }), ErrorCode::kConflict);
  EXPECT_EQ(code_of([&] { store.decide("c2", 9, "bad", love()); }), ErrorCode::kLevelOutOfRange);
  EXPECT_EQ(code_of([&] { store.decide("zz", 4, "x", love()); }), ErrorCode::kNotFound);

  const auto open = store.list_cases(CaseStatus::kOpen);
  ASSERT_EQ(open.size(), 1u);
  EXPECT_EQ(open[0].id, "c2");
  EXPECT_EQ(store.list_cases(CaseStatus::kDecided).size(), 1u);
  EXPECT_EQ(store.list_cases().size(), 2u);

  const auto log = text::split_lines(text::read_file((dir.path / "feedback.jsonl").string()));
  ASSERT_EQ(log.size(), 1u);
  const auto entry = json::parse(log[0]);
  EXPECT_EQ(entry["case_id"], "c1");
  EXPECT_EQ(entry["decided_level"], 5);
  EXPECT_EQ(entry["decided_label"], "Hopeful");
}

TEST(ReviewCases, ConcurrentModeratorsOneWins) {
  for (int trial = 0; trial < 10; ++trial) {
    TempDir dir("cas");
    Store store(dir.path);
    store.create_case(sample_case("c"));
    std::atomic<int> wins{0}, conflicts{0};
    std::vector<std::thread> mods;
    for (int m = 0; m < 4; ++m) {
      mods.emplace_back([&, m] {
        try {
          store.decide("c", 1 + m, "moderator " + std::to_string(m), love());
          ++wins;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kConflict) ++conflicts;
        }
      });
    }
    for (auto& t : mods) t.join();
    EXPECT_EQ(wins, 1);
    EXPECT_EQ(conflicts, 3);
    EXPECT_EQ(text::split_lines(text::read_file((dir.path / "feedback.jsonl").string())).size(), 1u);
  }
}

TEST(ReviewCases, DecidedWithoutDecisionIsCorrupt) {
  auto j = json(sample_case("c"));
  j["status"] = "decided";
  EXPECT_EQ(code_of([&] { j.get<ReviewCase>(); }), ErrorCode::kParseError);
}
