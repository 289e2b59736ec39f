#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reweighter/cocluster.hpp"
#include "reweighter/dataset.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/layout.hpp"
#include "reweighter/model.hpp"
#include "reweighter/quality.hpp"

namespace rw {

inline constexpr const char* kSessionFormat = "reweighter-session/1";

enum class AdjustmentKind { RelabelValidation, AddValidation, DragWeight, VerifyQuality };
enum class DragDirection { Up, Down };

std::string to_string(AdjustmentKind kind);
AdjustmentKind adjustment_kind_from_string(const std::string& s);

/// A user correction. `target` is a validation sample for RELABEL and DRAG
/// and a training sample for ADD and VERIFY. Only the payload field that
/// belongs to `kind` is meaningful.
struct Adjustment {
  AdjustmentKind kind = AdjustmentKind::VerifyQuality;
  SampleId target = 0;
  int new_label = 0;
  DragDirection direction = DragDirection::Up;
  QualityLabel verdict = QualityLabel::High;
  std::string timestamp;
  /// Assigned when the adjustment is applied.
  std::uint64_t sequence = 0;

  friend bool operator==(const Adjustment&, const Adjustment&) = default;
};

enum class LogKind { Adjustment, Recompute, FineTune };

/// One replayable event of the session history.
struct LogEntry {
  LogKind kind = LogKind::Adjustment;
  std::uint64_t sequence = 0;
  std::optional<Adjustment> adjustment;
  int epoch = 0;  // epoch after the event

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

struct Snapshot {
  std::string name;
  int epoch = 0;
  std::vector<double> w_s;
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct FineTuneMetrics {
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  friend bool operator==(const FineTuneMetrics&, const FineTuneMetrics&) = default;
};

struct SessionConfig {
  TrainConfig train;
  SolverConfig solver;
  double gamma = 0.1;
  double epsilon = 0.05;
  Normalization normalization = Normalization::ColumnMax;
  std::size_t max_leaf = 50;
  double tau_hi = 0.8;
  double tau_lo = 0.2;
  int confidence_folds = 5;
  bool warm_start = true;
  LayoutConfig layout;
};

/// Everything that changes while the user works. Copyable; every operation
/// below builds a new value and only replaces the old one on success.
struct SessionState {
  /// Latest classifier (replaced by fine-tuning).
  ModelState model;
  int model_revision = 0;
  /// Classifier the influence graph was computed with.
  ModelState graph_model;
  int graph_revision = 0;
  /// Label corrections the graph's training columns were computed with.
  std::map<SampleId, int> graph_labels;

  std::vector<ValidationRow> val_rows;
  BipartiteGraph graph;
  /// Labels fixed by relabeling, keyed by sample id.
  std::map<SampleId, int> corrected_labels;
  QualitySets quality;
  WeightBounds bounds;
  MultiTaskState sigma;
  CoClustering clustering;
  ClusterLayout layout;
  std::vector<Snapshot> snapshots;
  std::vector<LogEntry> log;
  std::uint64_t next_sequence = 1;
  int epoch = 0;
  std::optional<FineTuneMetrics> last_metrics;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

/// Initial state: classifier trained with uniform weights, graph over the
/// validation split with w^v = 1, confidence-seeded S+/S-, clustering and
/// layout of that graph. Epoch 0.
SessionState initial_state(const Dataset& ds, const SessionConfig& config);

/// Applies one adjustment (pure; throws rw::Error and leaves `state` alone
/// on invalid input). Assigns the next sequence number unless the adjustment
/// already carries it.
SessionState apply_adjustment(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                              Adjustment adj);

struct RecomputeSummary {
  int epoch = 0;
  DiffResult diff;
  int iterations = 0;
  bool converged = false;
  /// No descent step was found from the starting weights.
  bool stationary = false;
};

/// Re-solves the weights, then refreshes clustering and layout.
SessionState recompute(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                       RecomputeSummary* summary = nullptr);

/// Retrains the classifier on max(w^s, 0) with corrected labels. The graph
/// is left as is; the next recompute rebuilds it for the new model.
SessionState fine_tune(const Dataset& ds, const SessionConfig& config, const SessionState& state,
                       FineTuneMetrics* metrics = nullptr);

/// Training labels with corrections applied, in training-split order.
std::vector<int> training_labels(const Dataset& ds, const SessionState& state);

/// Owns the dataset, the current state and the undo stack.
class Session {
 public:
  Session(std::shared_ptr<const Dataset> dataset, SessionConfig config);
  Session(std::shared_ptr<const Dataset> dataset, SessionConfig config, SessionState initial, SessionState current,
          std::vector<SessionState> undo_stack);

  const Dataset& dataset() const { return *dataset_; }
  std::shared_ptr<const Dataset> dataset_ptr() const { return dataset_; }
  const SessionConfig& config() const { return config_; }
  const SessionState& state() const { return current_; }
  const SessionState& initial() const { return initial_; }
  const std::vector<SessionState>& undo_stack() const { return undo_; }

  /// Applies one adjustment and pushes an undo checkpoint. Returns its
  /// sequence number.
  std::uint64_t apply(const Adjustment& adj);
  /// All-or-nothing: on any failure the session is unchanged.
  std::vector<std::uint64_t> apply_batch(const std::vector<Adjustment>& batch);
  RecomputeSummary recompute();
  FineTuneMetrics fine_tune();
  /// Restores the state before the last adjustment.
  void undo();

  /// FNV-1a (64-bit, hex) of the serialized state and undo depth.
  std::string statehash() const;

  friend bool operator==(const Session& a, const Session& b) {
    return *a.dataset_ == *b.dataset_ && a.initial_ == b.initial_ && a.current_ == b.current_ && a.undo_ == b.undo_;
  }

 private:
  std::shared_ptr<const Dataset> dataset_;
  SessionConfig config_;
  SessionState initial_;
  SessionState current_;
  std::vector<SessionState> undo_;
};

enum class LoadMode { Restore, Replay };

/// Replays `log` onto `start`. Used by LoadMode::Replay.
Session replay(std::shared_ptr<const Dataset> dataset, const SessionConfig& config, const SessionState& start,
               const std::vector<LogEntry>& log);

std::string session_to_json_text(const Session& session);
Session session_from_json_text(const std::string& text, LoadMode mode = LoadMode::Restore);
void save_session(const Session& session, const std::filesystem::path& path);
Session load_session(const std::filesystem::path& path, LoadMode mode = LoadMode::Restore);

}  // namespace rw
