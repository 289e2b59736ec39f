#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "reweighter/cocluster.hpp"
#include "reweighter/dataset.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/quality.hpp"

namespace rw {

/// Aggregated strip between a validation cluster and a training cluster.
struct Link {
  std::size_t row_cluster = 0;
  std::size_t col_cluster = 0;
  double pos_mass = 0.0;  // sum of positive w^v_i g_ij
  double neg_mass = 0.0;  // sum of negative w^v_i g_ij
  bool context = false;

  double mass() const { return std::abs(pos_mass) + std::abs(neg_mass); }
  friend bool operator==(const Link&, const Link&) = default;
};

/// One link per (row cluster, column cluster) pair; links lighter than
/// `context_frac` of the heaviest are marked context.
std::vector<Link> compute_links(const Matrix& g, std::span<const double> w_v,
                                const std::vector<std::vector<std::size_t>>& row_clusters,
                                const std::vector<std::vector<std::size_t>>& col_clusters,
                                double context_frac = 0.02);

/// Pairs of non-context links that cross strictly: one is above the other
/// on the row axis and below it on the column axis. Links sharing a cluster
/// do not cross. Orders list cluster ids by position.
long count_crossings(std::span<const Link> links, std::span<const std::size_t> row_order,
                     std::span<const std::size_t> col_order);

struct ClusterOrder {
  std::vector<std::size_t> row_order;
  std::vector<std::size_t> col_order;
  long initial_crossings = 0;  // after the barycenter sweeps
  long crossings = 0;
};

/// Barycenter sweeps (3 per side, weighted by link mass) followed by
/// adjacent-swap hill climbing, leftmost improving swap first, rows before
/// columns. When both sides are small (k! * l! <= exhaustive_limit) the
/// climb's local optimum is finished off by exhaustive search.
ClusterOrder order_clusters(std::span<const Link> links, std::size_t num_rows, std::size_t num_cols,
                            std::size_t exhaustive_limit = 40320);

enum class Consistency { Consistent, Inconsistent };
enum class WeightSign { Positive, Negative };

struct Glyph {
  Consistency consistency = Consistency::Consistent;
  WeightSign sign = WeightSign::Positive;

  /// Bar index: 0 consistent/positive (green circle), 1 inconsistent/positive
  /// (green triangle), 2 inconsistent/negative (red triangle), 3
  /// consistent/negative (red circle).
  std::size_t bar() const;
  friend bool operator==(const Glyph&, const Glyph&) = default;
};

using BarCounts = std::array<std::size_t, 4>;

/// High confidence is confidence >= 0.5; w >= 0 is positive.
std::vector<Glyph> classify_glyphs(std::span<const double> w_s, std::span<const double> confidences);

BarCounts bar_counts(std::span<const Glyph> glyphs, std::span<const std::size_t> members);

/// Collapsed iff inconsistent / size < threshold_frac.
std::vector<bool> collapse_policy(std::span<const BarCounts> counts, double threshold_frac = 0.05);

/// rho(x) = k / (sum of distances to the k nearest members + 1e-12) with
/// k = min(10, size - 1); returns clamp01(rho_min / rho(x)) + 1[in_quality].
std::vector<double> representative_weights(const Matrix& features, const std::vector<bool>& in_quality);

/// All members when size <= budget, otherwise `budget` draws without
/// replacement proportional to representative_weights(). Sorted ascending.
std::vector<SampleId> sample_representatives(std::span<const SampleId> members, const Matrix& features,
                                             const std::vector<bool>& in_quality, std::size_t budget,
                                             std::uint64_t seed);

enum class Side { Validation, Training };

struct Contribution {
  SampleId id = 0;
  double value = 0.0;  // w^v_i g_ij
  friend bool operator==(const Contribution&, const Contribution&) = default;
};

struct Contributors {
  std::vector<Contribution> positive;
  std::vector<Contribution> negative;
};

/// For a training sample, ranks validation rows by w^v_i g_ij; for a
/// validation sample, ranks training columns by the same product. Zero
/// products are dropped; ties go to the smaller id.
Contributors top_contributors(const BipartiteGraph& graph, Side side, SampleId id, std::size_t k = 3);

struct DiffEntry {
  SampleId id = 0;
  double old_weight = 0.0;
  double new_weight = 0.0;
  bool flagged = false;
  friend bool operator==(const DiffEntry&, const DiffEntry&) = default;
};

struct DiffResult {
  std::vector<DiffEntry> entries;
  double threshold_pct = 10.0;
  friend bool operator==(const DiffResult&, const DiffResult&) = default;
};

/// Flags the ceil(pct/100 * n) entries with the largest |new - old|.
DiffResult compute_diff(std::span<const SampleId> ids, std::span<const double> old_w,
                        std::span<const double> new_w, double threshold_pct = 10.0);

struct SamplePosition {
  double x = 0.5;  // within-cluster t-SNE coordinate in [0, 1]
  double y = 0.0;  // weight
  friend bool operator==(const SamplePosition&, const SamplePosition&) = default;
};

struct LayoutConfig {
  double context_frac = 0.02;
  double collapse_threshold = 0.05;
  std::size_t representative_budget = 60;
  std::uint64_t seed = 0;
  friend bool operator==(const LayoutConfig&, const LayoutConfig&) = default;
};

/// Everything the cluster view draws. Row clusters are the validation
/// groups; column clusters are the leaves of the training hierarchy.
struct ClusterLayout {
  std::vector<std::vector<std::size_t>> row_clusters;  // graph row indices
  std::vector<std::vector<std::size_t>> col_clusters;  // graph column indices
  std::vector<std::size_t> row_order;
  std::vector<std::size_t> col_order;
  long crossings = 0;
  std::vector<Link> links;
  std::vector<SamplePosition> val_positions;    // per graph row
  std::vector<SamplePosition> train_positions;  // per graph column
  std::vector<Glyph> glyphs;                    // per graph column
  std::vector<BarCounts> bar_counts;            // per column cluster
  std::vector<bool> collapsed;                  // per column cluster
  std::vector<std::vector<SampleId>> row_representatives;
  std::vector<std::vector<SampleId>> col_representatives;
  std::vector<double> avg_val_weight;  // per row cluster

  friend bool operator==(const ClusterLayout&, const ClusterLayout&) = default;
};

ClusterLayout build_layout(const Dataset& ds, const BipartiteGraph& graph, const CoClustering& cc,
                           const QualitySets& q, const LayoutConfig& config = {});

}  // namespace rw
