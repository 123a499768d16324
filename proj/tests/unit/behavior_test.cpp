#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "dike/behavior.hpp"
#include "sim_backend.hpp"

using namespace dike;

namespace {

const BehaviorSpectrum& love() { return BehaviorSpectrum::bundled(); }

EmotionProfile P(std::map<std::string, double> w) { return EmotionProfile(std::move(w)); }

// Dense cosine over an explicit label list; deliberately shares nothing with classify.
int brute_force_level(const EmotionProfile& p, const BehaviorMatrix& m, const BehaviorSpectrum& s,
                      std::vector<double>* scores_out = nullptr) {
  std::set<std::string> labels;
  for (auto& [k, v] : p.weights()) labels.insert(k);
  for (auto& r : m.rows())
    for (auto& [k, v] : r.profile.weights()) labels.insert(k);
  std::vector<double> x;
  for (auto& k : labels) x.push_back(p.weight(k));
  int best = -1;
  double best_score = -2;
  for (int l = 1; l <= m.levels(); ++l) {
    std::vector<double> y;
    for (auto& k : labels) y.push_back(m.row(l).profile.weight(k));
    const double dot = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    const double nx = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    const double score = dot / (nx * ny);
    if (scores_out) scores_out->push_back(score);
    const bool better = score > best_score + 1e-12;
    const bool tie = std::abs(score - best_score) <= 1e-12;
    if (better || (tie && std::abs(s.level(l).scalar) < std::abs(s.level(best).scalar))) {
      best = l;
      best_score = score;
    }
  }
  return best;
}

std::vector<std::string> labels12() {
  return {"Love", "Joy", "Despair", "Grief", "Sadness", "Anxiety",
          "Melancholy", "Fear", "Serenity", "Anticipation", "Contentment", "Elation"};
}

BehaviorMatrix random_matrix(std::mt19937_64& rng, int levels = 7) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RewriteSet rs;
  rs.spectrum_id = "love-letter";
  std::vector<EmotionProfile> profiles;
  for (int l = 1; l <= levels; ++l) {
    std::map<std::string, double> w;
    for (auto& e : labels12()) {
      if (u(rng) < 0.5) w[e] = u(rng);
    }
    if (w.empty()) w["Love"] = 1.0;
    rs.rewrites.push_back({"d", l, ""});
    profiles.push_back(P(w));
  }
  return build_matrix(rs, profiles, levels);
}

}  // namespace

TEST(BehaviorSpectrum, BundledLoveLetterLevels) {
  const auto& s = love();
  ASSERT_EQ(s.size(), 7);
  EXPECT_EQ(s.level(1).label, "Despair");
  EXPECT_EQ(s.level(4).scalar, 0.0);
  EXPECT_EQ(s.parse_level("wishful"), 3);
  EXPECT_EQ(s.parse_level("Joyful"), 7);
  EXPECT_EQ(s.parse_level(" 5 "), 5);
  EXPECT_EQ(s.nearest_level(0.35), 5);
  EXPECT_EQ(s.nearest_level(-0.45), 3);  // tie toward 0
  EXPECT_THROW(s.level(8), Error);
  EXPECT_THROW(s.find("Rage"), Error);
  EXPECT_EQ(BehaviorSpectrum::from_json(s.to_json()).to_json(), s.to_json());
}

TEST(EmotionProfile, UniformWeights) {
  std::vector<std::string> two{"Love", "Despair"};
  auto p = profile_of(two);
  EXPECT_DOUBLE_EQ(p.weight("Love"), 0.5);
  EXPECT_DOUBLE_EQ(p.weight("Despair"), 0.5);
  std::vector<std::string> dup{"Joy", "Joy", "Fear"};
  p = profile_of(dup);
  EXPECT_DOUBLE_EQ(p.weight("Joy"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.weight("Fear"), 1.0 / 3.0);
  std::vector<std::string> none;
  try {
    profile_of(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
  EXPECT_THROW(EmotionProfile({{"Love", -1.0}}), Error);
  EXPECT_THROW(EmotionProfile({{"Love", 0.0}}), Error);
}

TEST(ExtractEmotions, ParsesAnalystReplies) {
  EmotionVocabulary vocab(SpectrumLibrary::bundled(), love());
  auto got = parse_emotion_list("1. love (+1.0)\n2. Despair: notable\n3. LOVE\n- Wonderment\n- Joy", 3,
                                vocab);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], (RankedEmotion{"Love", 1, true}));
  EXPECT_EQ(got[1], (RankedEmotion{"Despair", 2, true}));
  EXPECT_EQ(got[2], (RankedEmotion{"Wonderment", 3, false}));
  EXPECT_TRUE(parse_emotion_list("", 5, vocab).empty());
}

TEST(ExtractEmotions, ZeldaLetterScriptedAnalyst) {
  sim::Script script;
  script.overrides.push_back(
      {Role::kEmotionAnalyst, "Please, please don't be so depressed", "Love, Despair, Happiness, Anxiety"});
  sim::SimBackend sim(SpectrumLibrary::bundled(), love(), script);
  EmotionVocabulary vocab(SpectrumLibrary::bundled(), love());
  const auto got = extract_emotions(
      "Sweetheart,\nPlease, please don't be so depressed---We'll be married soon", 5, sim, vocab);
  ASSERT_EQ(got.size(), 4u);
  const std::vector<std::string> want{"Love", "Despair", "Happiness", "Anxiety"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(got[i].label, want[i]);
    EXPECT_EQ(got[i].rank, static_cast<int>(i) + 1);
  }
  EXPECT_FALSE(got[2].known);  // not in the bundled vocabulary; kept verbatim
  const auto p = profile_of(got);
  for (auto& w : want) EXPECT_DOUBLE_EQ(p.weight(w), 0.25);

  EXPECT_THROW(extract_emotions("  ", 5, sim, vocab), Error);
  EXPECT_THROW(extract_emotions("text", 0, sim, vocab), Error);
}

TEST(TrainingCorpus, SizeGapsAndEmpty) {
  sim::Script script;
  script.refuse = {"level 2 of 7"};
  sim::SimBackend sim(SpectrumLibrary::bundled(), love(), script);
  DocumentSet docs{{"a", "My dearest, I love you.", "t", {}}, {"b", "I miss you so.", "t", {}}};
  const auto rs = generate_training_corpus(docs, love(), sim);
  EXPECT_EQ(rs.rewrites.size(), 12u);
  ASSERT_EQ(rs.gaps.size(), 2u);
  EXPECT_EQ(rs.gaps[0].level, 2);
  EXPECT_EQ(rs.gaps[1].source_doc, "b");
  // Order follows (doc, level) regardless of completion order.
  EXPECT_EQ(rs.rewrites[0].source_doc, "a");
  EXPECT_EQ(rs.rewrites[0].level, 1);
  EXPECT_EQ(rs.rewrites[1].level, 3);
  EXPECT_EQ(generate_training_corpus(docs, love(), sim), rs);

  try {
    generate_training_corpus({}, love(), sim);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(BuildMatrix, HandTalliedToyCorpus) {
  // Three letters rewritten at two levels of a 2-level toy spectrum.
  RewriteSet rs{"toy", {{"d1", 1, ""}, {"d2", 1, ""}, {"d3", 1, ""}, {"d1", 2, ""}, {"d2", 2, ""}}, {}};
  std::vector<EmotionProfile> ps{P({{"Sadness", 1}, {"Fear", 1}}), P({{"Sadness", 1}}),
                                 P({{"Sadness", 1}, {"Grief", 1}}), P({{"Joy", 1}}),
                                 P({{"Joy", 1}, {"Love", 1}})};
  const auto m = build_matrix(rs, ps, 2);
  // Level 1 sums: Sadness .5+1+.5 = 2, Fear .5, Grief .5 -> total 3.
  EXPECT_DOUBLE_EQ(m.row(1).profile.weight("Sadness"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.row(1).profile.weight("Fear"), 0.5 / 3.0);
  EXPECT_DOUBLE_EQ(m.row(1).profile.weight("Grief"), 0.5 / 3.0);
  // Level 2: Joy 1.5, Love .5 -> total 2.
  EXPECT_DOUBLE_EQ(m.row(2).profile.weight("Joy"), 0.75);
  EXPECT_DOUBLE_EQ(m.row(2).profile.weight("Love"), 0.25);
  EXPECT_EQ(m.row(1).support, 3);
  EXPECT_EQ(m.row(1).presence.at("Sadness"), 3);
  EXPECT_EQ(m.row(2).presence.at("Love"), 1);
  EXPECT_EQ(m.vocabulary(), (std::set<std::string>{"Fear", "Grief", "Joy", "Love", "Sadness"}));
}

TEST(BuildMatrix, RowsEqualSingleProfilesAndDuplicatesCollapse) {
  RewriteSet one{"toy", {{"d", 1, ""}, {"d", 2, ""}}, {}};
  std::vector<EmotionProfile> ps{P({{"A", 1}, {"B", 3}}), P({{"C", 1}})};
  auto m = build_matrix(one, ps, 2);
  EXPECT_EQ(m.row(1).profile, ps[0]);
  RewriteSet twice{"toy", {{"d", 1, ""}, {"e", 1, ""}, {"d", 2, ""}}, {}};
  std::vector<EmotionProfile> ps2{ps[0], ps[0], ps[1]};
  auto m2 = build_matrix(twice, ps2, 2);
  for (auto& [k, v] : ps[0].weights()) EXPECT_NEAR(m2.row(1).profile.weight(k), v, 1e-15);
}

TEST(BuildMatrix, Errors) {
  RewriteSet rs{"toy", {{"d", 1, ""}}, {}};
  std::vector<EmotionProfile> ps{P({{"A", 1}})};
  try {
    build_matrix(rs, ps, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUncoveredLevel);
  }
  std::vector<EmotionProfile> none;
  EXPECT_THROW(build_matrix(rs, none, 1), Error);
  RewriteSet bad{"toy", {{"d", 3, ""}}, {}};
  EXPECT_THROW(build_matrix(bad, ps, 2), Error);
}

TEST(BuildMatrix, PermutationInvariantBitForBit) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RewriteSet rs{"love-letter", {}, {}};
  std::vector<EmotionProfile> ps;
  for (int i = 0; i < 140; ++i) {
    std::map<std::string, double> w;
    for (auto& e : labels12())
      if (u(rng) < 0.4) w[e] = u(rng);
    if (w.empty()) w["Joy"] = 1;
    rs.rewrites.push_back({"d" + std::to_string(i), i % 7 + 1, ""});
    ps.push_back(P(w));
  }
  const auto base = build_matrix(rs, ps, 7);
  std::vector<std::size_t> order(ps.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    RewriteSet shuffled{"love-letter", {}, {}};
    std::vector<EmotionProfile> sp;
    for (auto i : order) {
      shuffled.rewrites.push_back(rs.rewrites[i]);
      sp.push_back(ps[i]);
    }
    ASSERT_EQ(build_matrix(shuffled, sp, 7), base);
  }
  for (auto& r : base.rows()) EXPECT_NEAR(r.profile.sum(), 1.0, 1e-9);
}

TEST(Classify, SelfSimilarityAndOrthogonalTieBreak) {
  std::mt19937_64 rng(11);
  const auto m = random_matrix(rng);
  const auto c = classify(m.row(3).profile, m, love());
  EXPECT_EQ(c.level, 3);
  EXPECT_NEAR(c.scores.at(3), 1.0, 1e-12);
  // Disjoint vocabulary: every score 0, the neutral level wins.
  const auto o = classify(P({{"Wonderment", 1}}), m, love());
  for (auto& [l, s] : o.scores) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(o.level, 4);
}

TEST(Classify, TieBreakTowardNeutralThenLowerIndex) {
  // Rows 2 and 6 identical; scalar magnitudes 0.6 both, lower index wins.
  std::vector<EmotionProfile> ps;
  RewriteSet rs{"love-letter", {}, {}};
  for (int l = 1; l <= 7; ++l) {
    rs.rewrites.push_back({"d", l, ""});
    ps.push_back(l == 2 || l == 6 ? P({{"Target", 1}}) : P({{"Other" + std::to_string(l), 1}}));
  }
  auto m = build_matrix(rs, ps, 7);
  EXPECT_EQ(classify(P({{"Target", 1}}), m, love()).level, 2);
  // Rows 1 and 5 identical: 5 (|0.3|) beats 1 (|-1.0|).
  ps[0] = P({{"Target", 1}});
  ps[1] = P({{"X", 1}});
  ps[4] = P({{"Target", 1}});
  ps[5] = P({{"Y", 1}});
  m = build_matrix(rs, ps, 7);
  EXPECT_EQ(classify(P({{"Target", 1}}), m, love()).level, 5);
}

TEST(Classify, MatchesBruteForceOracle) {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto m = random_matrix(rng);
  for (int i = 0; i < 100; ++i) {
    std::map<std::string, double> w;
    for (auto& e : labels12())
      if (u(rng) < 0.4) w[e] = u(rng);
    if (w.empty()) w["Fear"] = 1;
    const auto p = P(w);
    std::vector<double> oracle_scores;
    const int want = brute_force_level(p, m, love(), &oracle_scores);
    const auto got = classify(p, m, love());
    ASSERT_EQ(got.level, want) << "instance " << i;
    for (int l = 1; l <= 7; ++l) EXPECT_NEAR(got.scores.at(l), oracle_scores[l - 1], 1e-12);
  }
}

TEST(Classify, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto m = random_matrix(rng);
  for (int i = 0; i < 50; ++i) {
    std::map<std::string, double> w;
    for (auto& e : labels12())
      if (u(rng) < 0.5) w[e] = std::floor(u(rng) * 5) + 1;
    const EmotionProfile raw(w, false);
    const int base = classify(raw, m, love()).level;
    for (double c : {0.001, 0.5, 3.0, 1e6}) EXPECT_EQ(classify(raw.scaled(c), m, love()).level, base);
    EXPECT_EQ(classify(EmotionProfile(w), m, love()).level, base);
  }
}

TEST(Classify, SyntheticRecovery) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto m = random_matrix(rng);
  int hits = 0, total = 0;
  for (int l = 1; l <= 7; ++l) {
    for (int k = 0; k < 30; ++k) {
      std::map<std::string, double> w;
      for (auto& e : labels12()) w[e] = m.row(l).profile.weight(e);
      std::map<std::string, double> noise;
      double l1 = 0;
      for (auto& e : labels12()) l1 += std::abs(noise[e] = u(rng));
      for (auto& e : labels12()) w[e] = std::max(0.0, w[e] + noise[e] * 0.05 / l1);
      hits += classify(P(w), m, love()).level == l;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(hits) / total, 0.95);
}

TEST(Entropy, AnalyticValues) {
  std::vector<int> same(10, 3);
  EXPECT_EQ(prediction_entropy(same, 7), 0.0);
  std::vector<int> uniform{1, 2, 3, 4, 5, 6, 7};
  EXPECT_NEAR(prediction_entropy(uniform, 7), 2.8073549220576042, 1e-12);
  std::vector<int> half{2, 6, 2, 6};
  EXPECT_DOUBLE_EQ(prediction_entropy(half, 7), 1.0);
  std::vector<int> empty;
  EXPECT_THROW(prediction_entropy(empty, 7), Error);
  std::vector<int> bad{0};
  EXPECT_THROW(prediction_entropy(bad, 7), Error);
}

TEST(Entropy, BoundedByLog2L) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> a(1 + rng() % 60);
    for (auto& x : a) x = 1 + static_cast<int>(rng() % 7);
    const double h = prediction_entropy(a, 7);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log2(7.0) + 1e-9);
  }
}

TEST(Evaluate, HandCountedTwentyFourItems) {
  const std::vector<int> truth{1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 5, 6, 6, 6, 7, 7, 7, 7, 7, 7};
  const std::vector<int> pred{1, 2, 1, 2, 3, 2, 3, 3, 5, 4, 4, 4, 5, 6, 5, 6, 6, 7, 7, 7, 6, 7, 1, 7};
  const auto r = evaluate(pred, truth, 7);
  EXPECT_EQ(r.count, 24u);
  EXPECT_DOUBLE_EQ(r.accuracy, 17.0 / 24.0);
  EXPECT_DOUBLE_EQ(r.within_one_level_accuracy, 22.0 / 24.0);  // misses: 3->5, 7->1
  EXPECT_NEAR(r.entropy, 2.7772925846689, 1e-12);
  EXPECT_EQ(r.confusion[0][0], 2);
  EXPECT_EQ(r.confusion[0][1], 1);
  EXPECT_EQ(r.confusion[2][4], 1);
  EXPECT_EQ(r.confusion[6][0], 1);
  EXPECT_EQ(r.confusion[6][5], 1);
  EXPECT_EQ(r.confusion[6][6], 4);
  int sum = 0;
  for (auto& row : r.confusion) sum = std::accumulate(row.begin(), row.end(), sum);
  EXPECT_EQ(sum, 24);

  const auto self = evaluate(truth, truth, 7);
  EXPECT_EQ(self.accuracy, 1.0);
  EXPECT_EQ(self.entropy, prediction_entropy(truth, 7));
  const std::vector<int> ones(24, 1), sevens(24, 7);
  EXPECT_EQ(evaluate(ones, sevens, 7).accuracy, 0.0);
  const std::vector<int> shorter{1};
  try {
    evaluate(shorter, truth, 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(Heatmap, PresenceGrid) {
  RewriteSet rs{"love-letter", {}, {}};
  std::vector<EmotionProfile> ps;
  for (int l = 1; l <= 7; ++l) {
    rs.rewrites.push_back({"a", l, ""});
    rs.rewrites.push_back({"b", l, ""});
    ps.push_back(P({{"Love", 1}}));
    ps.push_back(P({{"Love", 1}, {"Joy", 1}}));
  }
  const auto csv = heatmap_csv(build_matrix(rs, ps, 7), love());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "level,label,Joy,Love");
  EXPECT_NE(csv.find("\n1,Despair,1,2\n"), std::string::npos);
  EXPECT_NE(csv.find("\n7,Joyful Affection,1,2\n"), std::string::npos);
}
