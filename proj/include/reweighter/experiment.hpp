#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reweighter/dataset.hpp"
#include "reweighter/model.hpp"
#include "reweighter/quality.hpp"

namespace rw {

enum class RunMode { Uniform, Reweight, Improve };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

struct ExperimentConfig {
  TrainConfig train;
  SolverConfig solver;
  double tau_hi = 0.8;
  double tau_lo = 0.2;
  int confidence_folds = 5;
};

struct RunMetrics {
  RunMode mode = RunMode::Uniform;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  /// Present for the weighted modes when every training sample has a true label.
  std::optional<double> noise_auc;
};

/// uniform: unweighted training. reweight: build_influence() of the uniform
/// model with w^v = 1, then retraining on max(w^s, 0). improve: as reweight,
/// but w^v is first optimised against confidence-seeded S+/S-.
RunMetrics run_experiment(const Dataset& ds, RunMode mode, const ExperimentConfig& config);

/// Mann-Whitney AUC of `scores` for separating positives from negatives
/// (ties count one half). nullopt when either class is empty.
std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& positive);

/// Metrics as compact JSON with sorted keys.
std::string metrics_to_json_text(const RunMetrics& m);

}  // namespace rw
