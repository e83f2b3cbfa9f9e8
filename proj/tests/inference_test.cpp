// Copyright 2026 The milt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "milt/inference.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "milt/synth.hpp"
#include "test_util.hpp"

namespace milt {
namespace {

using milt::testing::error_code_of;

// 1-d model with weight 1: an instance at logit(s) scores s.
Model identity_model() {
  Model m;
  m.dim = 1;
  m.theta = Theta{{1.0}, {}};
  return m;
}

double inv_sigmoid(double s) { return std::log(s / (1.0 - s)); }

Dataset scored_dataset(const std::vector<double>& scores, const std::vector<std::vector<std::string>>& groups) {
  std::vector<Instance> inst;
  for (std::size_t i = 0; i < scores.size(); ++i) inst.emplace_back("i" + std::to_string(i), std::vector<double>{inv_sigmoid(scores[i])});
  std::vector<Group> gs;
  for (std::size_t g = 0; g < groups.size(); ++g) gs.push_back(Group{"g" + std::to_string(g), groups[g], 1.0, {}});
  return Dataset(inst, gs);
}

std::vector<InstancePrediction> from_scores(const std::vector<double>& scores, NeutralBand band) {
  std::vector<InstancePrediction> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({"p" + std::to_string(i), scores[i], classify(scores[i], band)});
  return out;
}

TEST(Classify, DefaultBand) {
  const NeutralBand band;
  EXPECT_EQ(band.width(), 0.048);
  EXPECT_EQ(classify(0.9, band), Sentiment::positive);
  EXPECT_EQ(classify(0.1, band), Sentiment::negative);
  EXPECT_EQ(classify(0.51, band), Sentiment::neutral);
  EXPECT_EQ(classify(0.47, band), Sentiment::neutral);
  EXPECT_EQ(classify(0.5, band), Sentiment::neutral);
}

TEST(Classify, BandEdgesAreDecisions) {
  const NeutralBand band(0.25);
  EXPECT_EQ(classify(0.75, band), Sentiment::positive);
  EXPECT_EQ(classify(0.25, band), Sentiment::negative);
  EXPECT_EQ(classify(std::nextafter(0.75, 0.0), band), Sentiment::neutral);
  EXPECT_EQ(classify(std::nextafter(0.25, 1.0), band), Sentiment::neutral);
}

TEST(Classify, ZeroBandSendsHalfToPositive) {
  EXPECT_EQ(classify(0.5, NeutralBand::none()), Sentiment::positive);
  EXPECT_EQ(classify(std::nextafter(0.5, 0.0), NeutralBand::none()), Sentiment::negative);
}

TEST(NeutralBand, RejectsOutOfRangeWidths) {
  EXPECT_EQ(error_code_of([] { NeutralBand(-0.01); }), errc::invalid_argument);
  EXPECT_THROW(NeutralBand(0.5), error);
  EXPECT_NO_THROW(NeutralBand(0.499));
}

TEST(GroupScore, MeanOfMemberScores) {
  const Dataset ds = scored_dataset({0.8, 0.6, 0.1}, {{"i0", "i1", "i2"}});
  EXPECT_NEAR(group_score(identity_model(), ds.group(0), ds), 0.5, 1e-15);
}

TEST(GroupScore, MajorityNegativeGroupCanStillBePositive) {
  // Two mildly negative members and one strongly positive one.
  const Dataset ds = scored_dataset({0.45, 0.4, 0.95}, {{"i0", "i1", "i2"}});
  const Model m = identity_model();
  EXPECT_EQ(classify(0.45, NeutralBand::none()), Sentiment::negative);
  EXPECT_GT(group_score(m, ds.group(0), ds), 0.5);
  EXPECT_EQ(classify_group(m, ds.group(0), ds), Sentiment::positive);
}

TEST(GroupScore, ThresholdAtHalf) {
  const Dataset ds = scored_dataset({0.5, 0.49}, {{"i0"}, {"i1"}});
  const Model m = identity_model();
  EXPECT_EQ(classify_group(m, ds.group(0), ds), Sentiment::positive);
  EXPECT_EQ(classify_group(m, ds.group(1), ds), Sentiment::negative);
}

TEST(GroupScore, DuplicatesWeighEachOccurrence) {
  const Dataset ds = scored_dataset({0.9, 0.3}, {{"i0", "i1", "i1"}});
  EXPECT_NEAR(group_score(identity_model(), ds.group(0), ds), 0.5, 1e-15);
}

TEST(GroupScore, EqualsSquareRootOfGroupTermAgainstZeroScore) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    OracleProblem p = random_oracle_problem(700 + seed);
    std::vector<Group> groups{p.dataset.group(0)};
    groups[0].score = 0.0;
    const Dataset one(std::vector<Instance>(p.dataset.instances().begin(), p.dataset.instances().end()), groups);
    Model m;
    m.dim = p.theta.dim();
    m.theta = p.theta;
    const std::vector<std::size_t> first{0};
    const Batch b = make_batch(one, first, SimilarityConfig{}, 1.0);
    const double s = group_score(m, one.group(0), one);
    EXPECT_EQ(s * s, group_term(m.theta, b)) << "seed " << seed;
  }
}

TEST(Attribute, RanksMembersByScore) {
  const Dataset ds = scored_dataset({0.2, 0.9, 0.6, 0.9}, {{"i0", "i1", "i2", "i3", "i0"}});
  const AttributionReport r = attribute(identity_model(), ds.group(0), ds);
  EXPECT_EQ(r.group_id, "g0");
  ASSERT_EQ(r.members.size(), 5u);
  EXPECT_EQ(r.members[0].id, "i1");
  EXPECT_EQ(r.members[1].id, "i3");
  EXPECT_EQ(r.members[2].id, "i2");
  EXPECT_EQ(r.members[3].id, "i0");
  EXPECT_EQ(r.members[4].id, "i0");
  EXPECT_EQ(r.members[0].label, Sentiment::positive);
  EXPECT_EQ(r.members[4].label, Sentiment::negative);
  EXPECT_NEAR(r.group_score, (0.2 + 0.9 + 0.6 + 0.9 + 0.2) / 5.0, 1e-15);
  EXPECT_EQ(r.group_label, Sentiment::positive);
}

TEST(Attribute, UnresolvedMemberIsAnError) {
  const Dataset ds = scored_dataset({0.2}, {{"i0", "ghost"}});
  EXPECT_EQ(error_code_of([&] { attribute(identity_model(), ds.group(0), ds); }), errc::unresolved_member);
}

TEST(Attribute, JsonAndTableAgree) {
  const Dataset ds = scored_dataset({0.2, 0.9, 0.51}, {{"i0", "i1", "i2"}});
  const AttributionReport r = attribute(identity_model(), ds.group(0), ds);
  const auto j = to_json(r);
  EXPECT_EQ(j["group_id"], "g0");
  ASSERT_EQ(j["members"].size(), 3u);
  EXPECT_EQ(j["members"][0]["id"], "i1");
  EXPECT_EQ(j["members"][1]["label"], "neutral");

  std::ostringstream table;
  write_attribution_table(table, r);
  const std::string text = table.str();
  EXPECT_NE(text.find("group g0"), std::string::npos);
  EXPECT_LT(text.find("i1"), text.find("i2"));
  EXPECT_LT(text.find("i2"), text.find("i0"));
  EXPECT_NE(text.find("neutral"), std::string::npos);
}

TEST(Predict, ScoresAndLabels) {
  const Dataset ds = scored_dataset({0.2, 0.9, 0.51}, {{"i0", "i1", "i2"}});
  const auto preds = predict(identity_model(), ds.instances(), NeutralBand{});
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].id, "i0");
  EXPECT_NEAR(preds[1].score, 0.9, 1e-15);
  EXPECT_EQ(preds[2].label, Sentiment::neutral);

  std::ostringstream out;
  write_predictions(out, preds);
  std::istringstream lines(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["score"].get<double>(), preds[n].score);
    ++n;
  }
  EXPECT_EQ(n, 3u);

  Model wide;
  wide.dim = 2;
  wide.theta = Theta::zeros(2);
  EXPECT_EQ(error_code_of([&] { predict(wide, ds.instances(), NeutralBand{}); }), errc::dimension_mismatch);
}

TEST(Metrics, IgnoreNeutralPolicy) {
  // 100 items: 24 neutral, 76 decided of which 70 are correct.
  std::vector<InstancePrediction> preds;
  std::vector<int> truth;
  for (int k = 0; k < 100; ++k) {
    if (k < 24) {
      preds.push_back({"n", 0.5, Sentiment::neutral});
      truth.push_back(k % 2);
    } else if (k < 94) {
      preds.push_back({"c", 0.9, Sentiment::positive});
      truth.push_back(1);
    } else {
      preds.push_back({"w", 0.1, Sentiment::negative});
      truth.push_back(1);
    }
  }
  const MetricsReport r = evaluate_instances(preds, truth, NeutralPolicy::ignore_neutral);
  EXPECT_EQ(r.recall, 0.76);
  ASSERT_TRUE(r.precision);
  EXPECT_DOUBLE_EQ(*r.precision, 0.9210526315789473);
  EXPECT_EQ(r.accuracy, 0.7);
  EXPECT_EQ(r.counts.neutral, 24u);
  EXPECT_EQ(r.counts.true_positive, 70u);
  EXPECT_EQ(r.counts.false_negative, 6u);

  const auto j = to_json(r);
  EXPECT_EQ(j["policy"], "ignore_neutral");
  EXPECT_EQ(j["counts"]["neutral"], 24);
}

TEST(Metrics, NoNeutralBandPolicyDecidesEverything) {
  const auto preds = from_scores({0.5, 0.52, 0.4, 0.7}, NeutralBand{});
  const std::vector<int> truth{1, 0, 0, 1};
  const MetricsReport r = evaluate_instances(preds, truth, NeutralPolicy::no_neutral_band);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.counts.neutral, 0u);
  EXPECT_EQ(*r.precision, 0.75);
}

TEST(Metrics, PrecisionUndefinedWhenNothingIsDecided) {
  const auto preds = from_scores({0.5, 0.51}, NeutralBand{});
  const std::vector<int> truth{1, 0};
  const MetricsReport r = evaluate_instances(preds, truth, NeutralPolicy::ignore_neutral);
  EXPECT_FALSE(r.precision);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_TRUE(to_json(r)["precision"].is_null());
}

TEST(Metrics, RejectsEmptyOrMismatchedInput) {
  const std::vector<InstancePrediction> none;
  const std::vector<int> no_truth;
  EXPECT_EQ(error_code_of([&] { evaluate_instances(none, no_truth, NeutralPolicy::ignore_neutral); }),
            errc::empty_evaluation);
  const auto preds = from_scores({0.9}, NeutralBand{});
  const std::vector<int> two{1, 0};
  EXPECT_THROW(evaluate_instances(preds, two, NeutralPolicy::ignore_neutral), error);
}

TEST(Metrics, TruthLabelsRequireLabels) {
  const std::vector<Instance> labelled{Instance("a", {0.0}, 1), Instance("b", {0.0}, 0)};
  EXPECT_EQ(truth_labels(labelled), (std::vector<int>{1, 0}));
  const std::vector<Instance> bare{Instance("a", {0.0})};
  EXPECT_THROW(truth_labels(bare), error);
}

TEST(EvaluateGroups, ZeroThetaPredictsEveryGroupPositive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n_groups = 50;
    cfg.score_mode = ScoreMode::binary_majority;
    const Dataset ds = generate(cfg);
    Model m;
    m.dim = ds.dim();
    m.theta = Theta::zeros(ds.dim());
    std::size_t positive = 0;
    for (const Group& g : ds.groups()) positive += g.score == 1.0 ? 1 : 0;
    EXPECT_EQ(evaluate_groups(m, ds), static_cast<double>(positive) / 50.0);
  }
}

TEST(EvaluateGroups, RequiresBinaryScores) {
  const Dataset ds = scored_dataset({0.9}, {{"i0"}});
  std::vector<Group> gs{ds.group(0)};
  gs[0].score = 0.3;
  const Dataset fractional(std::vector<Instance>(ds.instances().begin(), ds.instances().end()), gs);
  EXPECT_EQ(error_code_of([&] { evaluate_groups(identity_model(), fractional); }), errc::non_binary_score);
  EXPECT_EQ(evaluate_groups(identity_model(), ds), 1.0);
}

// Brute force: try every candidate distance and keep the widest band whose
// decided fraction meets the target.
double brute_force_band(const std::vector<double>& scores, double target) {
  double best = 0.0;
  for (double s : scores) {
    const double b = s >= 0.5 ? s - 0.5 : 0.5 - s;
    if (b >= 0.5) continue;
    std::size_t decided = 0;
    for (double t : scores) decided += classify(t, NeutralBand(b)) != Sentiment::neutral ? 1 : 0;
    if (static_cast<double>(decided) >= target * static_cast<double>(scores.size()) - 1e-9) best = std::max(best, b);
  }
  return best;
}

double recall_at(const std::vector<double>& scores, NeutralBand band) {
  std::size_t decided = 0;
  for (double s : scores) decided += classify(s, band) != Sentiment::neutral ? 1 : 0;
  return static_cast<double>(decided) / static_cast<double>(scores.size());
}

TEST(CalibrateBand, MatchesBruteForce) {
  rng gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(5 + gen.index(60));
    for (double& s : scores) s = gen.uniform();
    if (trial % 4 == 0) scores.push_back(scores.front());  // a tie
    for (double target : {0.1, 0.5, 0.762, 0.9, 0.99}) {
      const NeutralBand band = calibrate_band(scores, target);
      EXPECT_EQ(band.width(), brute_force_band(scores, target)) << trial << " " << target;
      EXPECT_GE(recall_at(scores, band), target - 1e-9);
    }
  }
}

TEST(CalibrateBand, KnownCases) {
  const std::vector<double> scores{0.1, 0.3, 0.45, 0.55, 0.8};
  EXPECT_EQ(calibrate_band(scores, 1.0).width(), 0.0);
  EXPECT_NEAR(calibrate_band(scores, 0.6).width(), 0.2, 1e-15);
  EXPECT_NEAR(calibrate_band(scores, 0.2).width(), 0.4, 1e-15);
  EXPECT_EQ(error_code_of([] { calibrate_band(std::vector<double>{}, 0.5); }), errc::empty_evaluation);
  EXPECT_THROW(calibrate_band(scores, 0.0), error);
  EXPECT_THROW(calibrate_band(scores, 1.5), error);
}

TEST(CalibrateBandProperty, RecallFallsAsBandWidens) {
  rng gen(12);
  std::vector<double> scores(500);
  for (double& s : scores) s = gen.uniform();
  double previous = 1.0;
  for (int k = 0; k < 50; ++k) {
    const double r = recall_at(scores, NeutralBand(0.49 * k / 49.0));
    EXPECT_LE(r, previous);
    previous = r;
  }
}

TEST(ClassifyProperty, WideningNeverFlipsADecision) {
  rng gen(13);
  for (int k = 0; k < 2000; ++k) {
    const double s = gen.uniform();
    const double b1 = gen.uniform(0.0, 0.49);
    const double b2 = gen.uniform(b1, 0.49);
    const Sentiment narrow = classify(s, NeutralBand(b1));
    const Sentiment wide = classify(s, NeutralBand(b2));
    if (wide != Sentiment::neutral) {
      EXPECT_EQ(wide, narrow);
    }
    if (narrow == Sentiment::neutral) {
      EXPECT_EQ(wide, Sentiment::neutral);
    }
  }
}

TEST(Auc, RankSum) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{0, 1, 0, 1}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), error);
}

}  // namespace
}  // namespace milt
