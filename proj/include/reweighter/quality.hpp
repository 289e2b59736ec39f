#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reweighter/dataset.hpp"
#include "reweighter/influence.hpp"

namespace rw {

enum class QualityLabel { High, Low };
enum class Provenance { Confidence, UserVerified };

/// S+ (High) and S- (Low) over training sample ids. A map keyed by id keeps
/// the two sets disjoint by construction.
struct QualitySets {
  struct Entry {
    QualityLabel label = QualityLabel::High;
    Provenance provenance = Provenance::Confidence;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::map<SampleId, Entry> entries;

  std::vector<SampleId> plus() const;
  std::vector<SampleId> minus() const;
  bool empty() const { return entries.empty(); }

  /// User verification; overrides whatever membership the id had.
  void verify(SampleId id, QualityLabel label);

  /// Re-seeds confidence-derived membership: confidence >= tau_hi -> S+,
  /// <= tau_lo -> S-. User-verified entries are left untouched.
  void refresh_from_confidence(std::span<const SampleId> train_ids, std::span<const double> confidences,
                               double tau_hi = 0.8, double tau_lo = 0.2);

  friend bool operator==(const QualitySets&, const QualitySets&) = default;
};

/// S+/S- resolved to column indices, ascending.
struct ColumnSets {
  std::vector<std::size_t> plus;
  std::vector<std::size_t> minus;
};

ColumnSets resolve_columns(const QualitySets& q, std::span<const SampleId> train_ids);

/// Per-validation-row optional bounds on w^v.
struct WeightBounds {
  std::vector<std::optional<double>> lower;
  std::vector<std::optional<double>> upper;

  WeightBounds() = default;
  explicit WeightBounds(std::size_t m) : lower(m), upper(m) {}

  std::size_t size() const { return lower.size(); }
  void resize(std::size_t m) {
    lower.resize(m);
    upper.resize(m);
  }
  void validate() const;

  friend bool operator==(const WeightBounds&, const WeightBounds&) = default;
};

/// sigma_c and sigma_b of the uncertainty-weighted objective.
struct MultiTaskState {
  double sigma_c = 1.0;
  double sigma_b = 1.0;
  friend bool operator==(const MultiTaskState&, const MultiTaskState&) = default;
};

struct LossWithGradient {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. w^s, length n
};

struct BalanceLoss {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> p;  // class weight distribution over S+
};

/// Binary cross-entropy pushing w^s positive on S+ and negative on S-,
/// through a numerically stable log-sigmoid.
LossWithGradient correctness_loss(std::span<const double> w_s, const ColumnSets& cols);

/// sum_c p_c log|p_c| over the S+ class mass distribution (0 log 0 = 0).
/// Columns in S+ with negative weight enter p_c as-is, so p_c may leave
/// [0, 1]; log|p| keeps the loss and its gradient defined there.
BalanceLoss balancedness_loss(std::span<const double> w_s, const ColumnSets& cols,
                              std::span<const int> labels, int num_classes);

struct QualityReport {
  double l_c = 0.0;
  double l_b = 0.0;
  std::vector<double> p;
  double objective = 0.0;
};

struct ObjectiveEval {
  QualityReport report;
  std::vector<double> grad_w_v;
  double grad_sigma_c = 0.0;
  double grad_sigma_b = 0.0;
};

/// Uncertainty-weighted objective
///   L_c / sigma_c^2 + (L_b + log C) / sigma_b^2 + log(sigma_c sigma_b)
/// with w^s = g^T w^v. The constant log C makes the balancedness term
/// non-negative (it is the KL divergence of p from uniform on the simplex),
/// without which sigma_b -> 0 drives the objective to -infinity.
ObjectiveEval objective(const Matrix& g, std::span<const double> w_v, const MultiTaskState& mt,
                        const ColumnSets& cols, std::span<const int> labels, int num_classes);
QualityReport objective(const BipartiteGraph& graph, std::span<const double> w_v, const MultiTaskState& mt,
                        const QualitySets& q, std::span<const int> labels, int num_classes);

/// Clamp to [max(0, lower_i), upper_i].
std::vector<double> project(std::span<const double> w_v, const WeightBounds& bounds);

struct SolverConfig {
  double tol = 1e-8;
  int max_iters = 2000;
  double init_step = 0.1;
  double shrink = 0.5;
  int max_halvings = 30;
  bool record_iterates = false;
  std::optional<MultiTaskState> initial_sigma;
  /// Lower bound on sigma_c and sigma_b, enforced by projection in log space.
  /// With a perfectly balanced p the balancedness term vanishes and the
  /// objective is otherwise unbounded below as sigma_b -> 0.
  double min_sigma = 1e-2;
  /// Largest change of log sigma per iteration. The log-space gradient
  /// scales with the loss value, so an unbounded first step can push sigma
  /// many orders of magnitude past its optimum.
  double max_log_sigma_step = 0.5;
};

struct OptimizeResult {
  std::vector<double> w_v;
  MultiTaskState sigma;
  /// Objective at the start point followed by one value per accepted step.
  std::vector<double> trace;
  /// w^v after each accepted step (only with record_iterates).
  std::vector<std::vector<double>> iterates;
  int accepted_steps = 0;
  int iterations = 0;
  bool stationary = false;
  bool converged = false;
};

/// Projected gradient descent over (w^v, log sigma_c, log sigma_b) with
/// backtracking. Starts from graph.val_weights projected onto `bounds`.
OptimizeResult optimize_weights(const BipartiteGraph& graph, const QualitySets& q, std::span<const int> labels,
                                int num_classes, const WeightBounds& bounds, const SolverConfig& config = {});
OptimizeResult optimize_weights(const Matrix& g, std::span<const double> init_w_v, const ColumnSets& cols,
                                std::span<const int> labels, int num_classes, const WeightBounds& bounds,
                                const SolverConfig& config = {});

}  // namespace rw
