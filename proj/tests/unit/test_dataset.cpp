#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "reweighter/dataset.hpp"
#include "reweighter/error.hpp"

namespace {

using namespace rw;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rw_test_" + name);
}

std::map<int, std::size_t> observed_counts(const Dataset& ds, const std::vector<SampleId>& ids) {
  std::map<int, std::size_t> counts;
  for (SampleId id : ids) ++counts[ds.at(id).observed_label];
  return counts;
}

std::map<int, std::size_t> true_counts(const Dataset& ds, const std::vector<SampleId>& ids) {
  std::map<int, std::size_t> counts;
  for (SampleId id : ids) ++counts[*ds.at(id).true_label];
  return counts;
}

std::string expect_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

TEST(Generate, BalancedNoiseFree) {
  DatasetGenConfig c;
  c.num_classes = 2;
  c.per_class = 100;
  c.imbalance_factor = 1.0;
  c.noise_ratio = 0.0;
  const Dataset ds = generate(c);
  EXPECT_EQ(ds.train_ids().size(), 200u);
  for (SampleId id : ds.train_ids()) EXPECT_FALSE(ds.at(id).mislabeled());
}

TEST(Generate, ParetoCounts) {
  DatasetGenConfig c;
  c.num_classes = 4;
  c.per_class = 100;
  c.imbalance_factor = 10.0;
  const auto counts = imbalanced_counts(c);
  ASSERT_EQ(counts.size(), 4u);
  // 100 * 10^(-c/3), rounded.
  EXPECT_EQ(counts[0], 100u);
  EXPECT_EQ(counts[1], 46u);
  EXPECT_EQ(counts[2], 22u);
  EXPECT_EQ(counts[3], 10u);
  const Dataset ds = generate(c);
  const auto by_class = true_counts(ds, ds.train_ids());
  for (int k = 0; k < 4; ++k) EXPECT_EQ(by_class.at(k), counts[static_cast<std::size_t>(k)]);
}

TEST(Generate, ExactNoiseCount) {
  DatasetGenConfig c;
  c.num_classes = 2;
  c.per_class = 50;
  c.noise_ratio = 0.3;
  c.val_per_class = 10;
  c.val_noise_ratio = 0.2;
  const Dataset ds = generate(c);
  std::size_t noisy = 0, val_noisy = 0;
  for (SampleId id : ds.train_ids()) noisy += ds.at(id).mislabeled();
  for (SampleId id : ds.validation_ids()) val_noisy += ds.at(id).mislabeled();
  EXPECT_EQ(noisy, 30u);
  EXPECT_EQ(val_noisy, 4u);
}

TEST(Generate, TestSplitCleanAndBalanced) {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.per_class = 60;
  c.noise_ratio = 0.4;
  c.imbalance_factor = 5.0;
  c.test_per_class = 30;
  const Dataset ds = generate(c);
  for (SampleId id : ds.test_ids()) EXPECT_FALSE(ds.at(id).mislabeled());
  for (const auto& [cls, n] : observed_counts(ds, ds.test_ids())) EXPECT_EQ(n, 30u) << "class " << cls;
}

TEST(Generate, NoisyLabelIsNearestOtherMean) {
  DatasetGenConfig c;
  c.num_classes = 4;
  c.per_class = 80;
  c.noise_ratio = 0.3;
  c.seed = 3;
  const Dataset ds = generate(c);
  // Four means on a circle: each class has two equidistant neighbours and
  // the lower index wins, so the confusion map is 0->1, 1->0, 2->1, 3->0.
  const int expected[4] = {1, 0, 1, 0};
  int noisy = 0;
  for (SampleId id : ds.train_ids()) {
    const Sample& s = ds.at(id);
    if (!s.mislabeled()) continue;
    ++noisy;
    EXPECT_EQ(s.observed_label, expected[*s.true_label]);
  }
  EXPECT_GT(noisy, 0);
}

TEST(Generate, NoisyLabelOnLineIsAdjacentClass) {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.feature_dim = 1;
  c.per_class = 60;
  c.noise_ratio = 0.4;
  c.seed = 5;
  const Dataset ds = generate(c);
  const auto means = class_means(3, 1, c.class_separation);
  for (SampleId id : ds.train_ids()) {
    const Sample& s = ds.at(id);
    if (!s.mislabeled()) continue;
    const int t = *s.true_label;
    int best = -1;
    for (int k = 0; k < 3; ++k) {
      if (k == t) continue;
      const double dk = std::abs(means[static_cast<std::size_t>(k)][0] - means[static_cast<std::size_t>(t)][0]);
      if (best < 0 || dk < std::abs(means[static_cast<std::size_t>(best)][0] - means[static_cast<std::size_t>(t)][0]) - 1e-9)
        best = k;
    }
    EXPECT_EQ(s.observed_label, best);
  }
}

TEST(Generate, DeterministicPerSeed) {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.noise_ratio = 0.2;
  c.seed = 99;
  EXPECT_EQ(dataset_to_json_text(generate(c)), dataset_to_json_text(generate(c)));
  DatasetGenConfig d = c;
  d.seed = 100;
  EXPECT_NE(dataset_to_json_text(generate(c)), dataset_to_json_text(generate(d)));
}

TEST(Generate, ImbalanceRatioWithinOneCount) {
  for (double lambda : {1.0, 2.5, 10.0, 20.0}) {
    DatasetGenConfig c;
    c.num_classes = 5;
    c.per_class = 200;
    c.imbalance_factor = lambda;
    const auto counts = imbalanced_counts(c);
    // max / lambda must round to min.
    EXPECT_LE(std::abs(static_cast<double>(counts.front()) / lambda - static_cast<double>(counts.back())), 1.0);
    for (std::size_t k = 1; k < counts.size(); ++k) EXPECT_LE(counts[k], counts[k - 1]);
  }
}

TEST(Generate, RejectsBadConfigs) {
  DatasetGenConfig c;
  c.feature_dim = 0;
  EXPECT_EQ(expect_code([&] { generate(c); }), errc::kInvalidArgument);
  DatasetGenConfig d;
  d.per_class = 3;
  d.num_classes = 3;
  d.imbalance_factor = 1000.0;
  EXPECT_EQ(expect_code([&] { generate(d); }), errc::kInvalidArgument);
}

TEST(DatasetIo, RoundTripIsExact) {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.noise_ratio = 0.25;
  c.seed = 5;
  const Dataset ds = generate(c);
  const auto path = temp_path("roundtrip.json");
  save_dataset(ds, path);
  EXPECT_EQ(load_dataset(path), ds);
  std::filesystem::remove(path);
}

TEST(DatasetIo, SmallFile) {
  const std::string text = R"({"num_classes": 2, "feature_dim": 1,
    "samples": [{"id": 0, "features": [0.5], "observed_label": 0},
                {"id": 1, "features": [1.5], "observed_label": 1, "true_label": 1},
                {"id": 2, "features": [2.5], "observed_label": 1, "payload": "x"}],
    "splits": {"train": [0, 1], "validation": [2], "test": []}})";
  const Dataset ds = dataset_from_json_text(text);
  EXPECT_EQ(ds.samples().size(), 3u);
  EXPECT_FALSE(ds.at(0).true_label.has_value());
  EXPECT_EQ(ds.at(2).payload, "x");
}

TEST(DatasetIo, InvalidClassIndex) {
  const std::string text = R"({"num_classes": 2, "feature_dim": 1,
    "samples": [{"id": 0, "features": [0.5], "observed_label": 5}],
    "splits": {"train": [0], "validation": [], "test": []}})";
  EXPECT_EQ(expect_code([&] { dataset_from_json_text(text); }), errc::kInvalidClassIndex);
}

TEST(DatasetIo, OverlappingSplits) {
  const std::string text = R"({"num_classes": 2, "feature_dim": 1,
    "samples": [{"id": 0, "features": [0.5], "observed_label": 0},
                {"id": 1, "features": [0.7], "observed_label": 1}],
    "splits": {"train": [0, 1], "validation": [], "test": [0]}})";
  EXPECT_EQ(expect_code([&] { dataset_from_json_text(text); }), errc::kOverlappingSplits);
}

TEST(DatasetIo, DimensionMismatch) {
  const std::string text = R"({"num_classes": 2, "feature_dim": 2,
    "samples": [{"id": 0, "features": [0.5], "observed_label": 0}],
    "splits": {"train": [0], "validation": [], "test": []}})";
  EXPECT_EQ(expect_code([&] { dataset_from_json_text(text); }), errc::kDimensionMismatch);
}

TEST(DatasetIo, CorruptedLabelFailsToLoad) {
  DatasetGenConfig c;
  c.per_class = 5;
  const Dataset ds = generate(c);
  std::string text = dataset_to_json_text(ds);
  const auto pos = text.find("\"observed_label\": ");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 18] = 'x';
  EXPECT_EQ(expect_code([&] { dataset_from_json_text(text); }), errc::kMalformed);
}

TEST(DatasetIo, EmptyDataset) {
  const Dataset empty(2, 3, {}, {});
  const auto path = temp_path("empty.json");
  save_dataset(empty, path);
  const Dataset back = load_dataset(path);
  EXPECT_EQ(back, empty);
  EXPECT_TRUE(back.samples().empty());
  std::filesystem::remove(path);
}

TEST(DatasetIo, MissingFileIsIoError) {
  EXPECT_EQ(expect_code([] { load_dataset("/nonexistent/rw/none.json"); }), errc::kIo);
}

TEST(DatasetIo, SeventeenDigitFormatting) {
  EXPECT_EQ(std::stod(format_real(0.1)), 0.1);
  EXPECT_EQ(std::stod(format_real(1.0 / 3.0)), 1.0 / 3.0);
}

}  // namespace
