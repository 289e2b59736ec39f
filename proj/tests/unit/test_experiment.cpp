#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"
#include "reweighter/error.hpp"
#include "reweighter/experiment.hpp"
#include "reweighter/rng.hpp"

namespace {

using namespace rw;

// Pairwise count over all (positive, negative) pairs, ties worth one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

Dataset clean_balanced() {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.per_class = 80;
  c.noise_ratio = 0.0;
  c.val_noise_ratio = 0.0;
  c.val_per_class = 6;
  c.test_per_class = 100;
  c.class_separation = 4.0;
  c.seed = 11;
  return generate(c);
}

TEST(Auc, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  EXPECT_DOUBLE_EQ(*auc(s, {false, false, true, true}), 0.75);
  EXPECT_DOUBLE_EQ(*auc(s, {false, false, false, true}), 1.0);
  EXPECT_DOUBLE_EQ(*auc(s, {true, false, false, false}), 0.0);
  EXPECT_DOUBLE_EQ(*auc(std::vector<double>{1.0, 1.0}, {true, false}), 0.5);
}

TEST(Auc, OneSidedLabelsGiveNothing) {
  EXPECT_FALSE(auc(std::vector<double>{1.0, 2.0}, {true, true}).has_value());
  EXPECT_FALSE(auc(std::vector<double>{1.0, 2.0}, {false, false}).has_value());
}

TEST(Auc, LengthMismatch) {
  EXPECT_THROW(auc(std::vector<double>{1.0}, {true, false}), Error);
}

TEST(Auc, MatchesPairwiseOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6));  // coarse values force ties
      pos[i] = rng.uniform() < 0.4;
    }
    pos[0] = true;
    pos[1] = false;
    EXPECT_NEAR(*auc(s, pos), pairwise_auc(s, pos), 1e-12);
  }
}

TEST(RunMode, Names) {
  for (RunMode m : {RunMode::Uniform, RunMode::Reweight, RunMode::Improve})
    EXPECT_EQ(run_mode_from_string(to_string(m)), m);
  EXPECT_EQ(to_string(RunMode::Improve), "improve");
  EXPECT_THROW(run_mode_from_string("fsr"), Error);
}

TEST(Experiment, CleanBalancedModesAgree) {
  const Dataset ds = clean_balanced();
  ExperimentConfig cfg;
  std::vector<double> acc;
  for (RunMode m : {RunMode::Uniform, RunMode::Reweight, RunMode::Improve}) {
    const RunMetrics r = run_experiment(ds, m, cfg);
    EXPECT_EQ(r.per_class_accuracy.size(), 3u);
    acc.push_back(r.test_accuracy);
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  EXPECT_LE(*hi - *lo, 0.01) << acc[0] << " " << acc[1] << " " << acc[2];
}

TEST(Experiment, NoTrueLabelsOmitsAuc) {
  const Dataset base = clean_balanced();
  std::vector<Sample> samples = base.samples();
  for (Sample& s : samples) s.true_label.reset();
  const Dataset ds(base.num_classes(), base.feature_dim(), samples, base.splits());
  const RunMetrics r = run_experiment(ds, RunMode::Reweight, ExperimentConfig{});
  EXPECT_FALSE(r.noise_auc.has_value());
  EXPECT_EQ(nlohmann::json::parse(metrics_to_json_text(r)).count("noise_auc"), 0u);
}

TEST(Experiment, UniformModeHasNoAuc) {
  const RunMetrics r = run_experiment(clean_balanced(), RunMode::Uniform, ExperimentConfig{});
  EXPECT_FALSE(r.noise_auc.has_value());
}

TEST(Experiment, NoisyRunReportsAuc) {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.per_class = 60;
  c.noise_ratio = 0.3;
  c.seed = 2;
  const RunMetrics r = run_experiment(generate(c), RunMode::Reweight, ExperimentConfig{});
  ASSERT_TRUE(r.noise_auc.has_value());
  EXPECT_GE(*r.noise_auc, 0.0);
  EXPECT_LE(*r.noise_auc, 1.0);
}

TEST(Metrics, JsonHasSortedKeys) {
  RunMetrics m;
  m.mode = RunMode::Improve;
  m.seed = 7;
  m.test_accuracy = 0.5;
  m.per_class_accuracy = {0.25, 0.75};
  m.noise_auc = 0.9;
  const std::string text = metrics_to_json_text(m);
  EXPECT_EQ(text,
            R"({"mode":"improve","noise_auc":0.9,"per_class_accuracy":[0.25,0.75],"seed":7,"test_accuracy":0.5})");
}

}  // namespace
