#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "reweighter/dataset.hpp"
#include "reweighter/matrix.hpp"

namespace rw {

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 300;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  /// L2 penalty on the non-bias parameters: (l2 / 2) * ||W||^2.
  double l2 = 1e-3;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Multinomial logistic regression. theta is C x (d + 1); the last column
/// is the bias. Flattened gradients use the same row-major layout.
struct ModelState {
  Matrix theta;
  TrainConfig config;

  std::size_t num_classes() const { return theta.rows(); }
  std::size_t feature_dim() const { return theta.cols() - 1; }
  std::size_t num_params() const { return theta.rows() * theta.cols(); }

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Features and labels laid out for training.
struct TrainingSet {
  Matrix features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Training split of `ds` in split order. `label_overrides` replaces the
/// observed label of the listed ids.
TrainingSet make_training_set(const Dataset& ds, const std::map<SampleId, int>& label_overrides = {});

/// Minimises sum_j max(w_j,0) * CE_j / sum_j max(w_j,0) + l2/2 ||W||^2 by
/// gradient descent from theta = 0. Throws on all-zero effective weights or
/// a non-finite loss.
ModelState fit(const TrainingSet& data, std::span<const double> weights, const TrainConfig& config);

/// Trains on the training split of `ds`; uniform weights when none are given.
ModelState train_model(const Dataset& ds, std::optional<std::span<const double>> sample_weights,
                       const TrainConfig& config);

std::vector<double> predict_proba(const ModelState& model, std::span<const double> features);
int predict(const ModelState& model, std::span<const double> features);

/// Flattened d CE(label | x; theta) / d theta = (softmax(z) - onehot) (x) [x; 1].
std::vector<double> per_sample_gradient(const ModelState& model, std::span<const double> features,
                                        int label);
std::vector<double> per_sample_gradient(const ModelState& model, const Sample& sample);

/// Weighted mean cross-entropy plus the L2 term; the quantity fit() minimises.
double training_loss(const ModelState& model, const TrainingSet& data, std::span<const double> weights);

struct Accuracy {
  double accuracy = 0.0;
  std::vector<double> per_class;
};

/// Accuracy over the given ids, scored against true labels when present.
Accuracy evaluate(const ModelState& model, const Dataset& ds, std::span<const SampleId> ids);

}  // namespace rw
