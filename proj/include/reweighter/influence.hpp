#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "reweighter/dataset.hpp"
#include "reweighter/matrix.hpp"
#include "reweighter/model.hpp"

namespace rw {

/// Influence of every validation sample (row i) on every training sample
/// (column j).
///
/// g_ij is the dot product of per-sample loss gradients,
///   g_ij = grad CE(v_i; theta) . grad CE(s_j; theta),
/// i.e. the contribution of v_i to the meta-gradient that validation-based
/// reweighting uses for s_j. Positive means training on s_j lowers the loss
/// on v_i. Any other kernel can be plugged in by filling `g` directly (see
/// import_influence()).
struct BipartiteGraph {
  std::vector<SampleId> val_ids;
  std::vector<SampleId> train_ids;
  Matrix g;
  std::vector<double> val_weights;
  std::vector<double> confidences;

  std::size_t m() const { return val_ids.size(); }
  std::size_t n() const { return train_ids.size(); }

  /// Throws if shapes disagree, an entry is non-finite or a weight is negative.
  void validate() const;

  friend bool operator==(const BipartiteGraph&, const BipartiteGraph&) = default;
};

/// A validation row: the sample it refers to and the label used for its loss.
struct ValidationRow {
  SampleId id = 0;
  int label = 0;
  friend bool operator==(const ValidationRow&, const ValidationRow&) = default;
};

struct ConfidenceResult {
  std::vector<double> values;
  /// Folds whose out-of-fold training data missed a class; their samples
  /// were scored with the whole-data model instead.
  std::vector<int> fallback_folds;
};

/// Row i of the influence matrix: gradient of `row` dotted with every
/// precomputed training gradient.
std::vector<double> influence_row(const ModelState& model, const Sample& sample, int label,
                                  const Matrix& train_gradients);

/// Per-sample gradients of the training split (one row per training sample).
Matrix training_gradients(const ModelState& model, const Dataset& ds,
                          const std::map<SampleId, int>& label_overrides = {});

/// Builds the graph over `rows` x training split. Confidences are left empty.
BipartiteGraph build_graph(const ModelState& model, const Dataset& ds,
                           std::span<const ValidationRow> rows,
                           std::optional<std::span<const double>> init_val_weights,
                           const std::map<SampleId, int>& label_overrides = {});

/// Builds the graph over the validation split with observed labels and
/// fills confidences with compute_confidence().
BipartiteGraph build_graph(const ModelState& model, const Dataset& ds,
                           std::optional<std::span<const double>> init_val_weights = std::nullopt);

/// Parameters the graph is computed at: theta = 0 with the shape and
/// training config of `trained`. Near convergence the summed validation
/// gradient vanishes and the sign of w^s is mostly noise.
ModelState influence_checkpoint(const ModelState& trained);

/// Graph over the validation split at influence_checkpoint(trained), with
/// confidences from compute_confidence(trained).
BipartiteGraph build_influence(const ModelState& trained, const Dataset& ds, int folds = 5);

/// Cross-fitted probability of each training sample's label: samples of
/// fold f are scored by a model trained (same config) on the other folds.
ConfidenceResult compute_confidence(const ModelState& model, const TrainingSet& data, int folds = 5);
ConfidenceResult compute_confidence(const ModelState& model, const Dataset& ds, int folds = 5);

/// w^s_j = sum_i w^v_i g_ij, accumulated in ascending i.
std::vector<double> training_weights(const BipartiteGraph& graph);
std::vector<double> training_weights(const Matrix& g, std::span<const double> val_weights);

/// CSV: first line "m,n", then m lines of n comma-separated values. The
/// JSON sidecar carries val_ids, train_ids, val_weights and confidences.
void export_influence(const BipartiteGraph& graph, const std::filesystem::path& csv_path,
                      const std::filesystem::path& sidecar_path);
BipartiteGraph import_influence(const std::filesystem::path& csv_path,
                                const std::filesystem::path& sidecar_path);

}  // namespace rw
