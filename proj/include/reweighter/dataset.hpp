#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace rw {

using SampleId = std::int64_t;

struct Sample {
  SampleId id = 0;
  std::vector<double> features;
  int observed_label = 0;
  std::optional<int> true_label;
  std::string payload;

  bool mislabeled() const { return true_label && *true_label != observed_label; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Splits {
  std::vector<SampleId> train;
  std::vector<SampleId> validation;
  std::vector<SampleId> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

/// Immutable labeled dataset. The constructor checks every invariant (class
/// indices, feature dimension, split partition) and throws rw::Error.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int num_classes, std::size_t feature_dim, std::vector<Sample> samples, Splits splits);

  int num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Splits& splits() const noexcept { return splits_; }
  const std::vector<SampleId>& train_ids() const noexcept { return splits_.train; }
  const std::vector<SampleId>& validation_ids() const noexcept { return splits_.validation; }
  const std::vector<SampleId>& test_ids() const noexcept { return splits_.test; }

  bool contains(SampleId id) const { return index_.contains(id); }
  /// Throws rw::Error(unknown_sample) when absent.
  const Sample& at(SampleId id) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_classes_ == b.num_classes_ && a.feature_dim_ == b.feature_dim_ &&
           a.samples_ == b.samples_ && a.splits_ == b.splits_;
  }

 private:
  int num_classes_ = 2;
  std::size_t feature_dim_ = 0;
  std::vector<Sample> samples_;
  Splits splits_;
  std::unordered_map<SampleId, std::size_t> index_;
};

struct DatasetGenConfig {
  int num_classes = 2;
  std::size_t per_class = 100;
  double noise_ratio = 0.0;
  double imbalance_factor = 1.0;
  std::size_t val_per_class = 10;
  double val_noise_ratio = 0.2;
  std::size_t test_per_class = 100;
  std::size_t feature_dim = 2;
  double class_separation = 3.0;
  std::uint64_t seed = 0;
};

/// Per-class training counts: round(per_class * imbalance^(-c/(C-1))).
std::vector<std::size_t> imbalanced_counts(const DatasetGenConfig& config);

/// Class means: a regular polygon in the first two feature dimensions with
/// adjacent means `class_separation` apart (a line when d == 1).
std::vector<std::vector<double>> class_means(int num_classes, std::size_t feature_dim,
                                             double class_separation);

/// Synthetic Gaussian-blob dataset with Pareto-style imbalance and
/// structured label noise. Pure function of the config.
///
/// Sample ids are assigned in generation order: training (class-major),
/// then validation (class-major), then test (class-major). A noisy sample's
/// observed label is the class whose mean is nearest its true class's mean
/// (lower index on ties), which emulates the confusions made by a
/// pseudo-labeler.
Dataset generate(const DatasetGenConfig& config);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

/// JSON text of `ds` with every real number written with 17 significant digits.
std::string dataset_to_json_text(const Dataset& ds);
Dataset dataset_from_json_text(const std::string& text);

/// `%.17g` formatting used by every file format in the project.
std::string format_real(double value);

}  // namespace rw
