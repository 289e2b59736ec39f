#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reweighter/matrix.hpp"

namespace rw {

enum class Category : std::uint8_t { Pos = 0, Neu = 1, Neg = 2 };
inline constexpr std::size_t kNumCategories = 3;

/// How g is scaled before thresholding.
enum class Normalization { None, ColumnMax, GlobalMax };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct DiscreteMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Category> entries;
  double epsilon = 0.05;

  Category operator()(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
  friend bool operator==(const DiscreteMatrix&, const DiscreteMatrix&) = default;
};

/// value >= eps -> Pos, value <= -eps -> Neg, otherwise Neu, after the
/// chosen normalisation (column-max divides each column by its largest |g|).
DiscreteMatrix discretize(const Matrix& g, double epsilon = 0.05, Normalization norm = Normalization::ColumnMax);

using BlockCounts = std::array<std::size_t, kNumCategories>;

/// A node of the training-column hierarchy. Leaves have no children.
struct ColumnNode {
  std::vector<std::size_t> columns;
  /// Set when the node's children come from a balanced bisection because no
  /// cost-reducing split existed.
  bool forced = false;
  std::vector<ColumnNode> children;

  friend bool operator==(const ColumnNode&, const ColumnNode&) = default;
};

struct CoClustering {
  std::vector<std::size_t> row_group;  // group index per row
  std::vector<std::size_t> col_group;  // group index per column
  std::size_t k = 0;                   // row groups
  std::size_t l = 0;                   // column groups
  std::vector<BlockCounts> block_counts;  // k * l, index rg * l + cg
  double total_cost = 0.0;
  /// One node per top-level column group, present after refine_hierarchy()
  /// split at least one group.
  std::optional<std::vector<ColumnNode>> col_children;

  const BlockCounts& block(std::size_t rg, std::size_t cg) const { return block_counts[rg * l + cg]; }
  std::vector<std::vector<std::size_t>> row_groups() const;
  std::vector<std::vector<std::size_t>> col_groups() const;
  /// Leaves of the column hierarchy in depth-first order (the top-level
  /// groups when there is no hierarchy).
  std::vector<std::vector<std::size_t>> leaf_col_groups() const;

  friend bool operator==(const CoClustering&, const CoClustering&) = default;
};

/// Universal code length of a positive integer in bits:
/// log2(2.865064) + log2 n + log2 log2 n + ... (positive terms only).
double log2_star(double n);

/// Description length in bits:
///   sum_blocks [t_b H(p_b) + 2 log2(t_b + 1)] + log2*(k) + log2*(l) + m log2 k + n log2 l
double code_cost(const CoClustering& cc);

/// Groups given as per-index assignments; group ids are renumbered in order
/// of first appearance and counts/cost are filled in.
CoClustering make_coclustering(const DiscreteMatrix& dm, std::vector<std::size_t> row_group,
                               std::vector<std::size_t> col_group);

struct FacaOptions {
  /// Previous partition to continue from; ignored when its shape differs.
  const CoClustering* warm_start = nullptr;
  /// Receives the committed cost after every accepted sweep or split.
  std::vector<double>* cost_trace = nullptr;
  int max_splits = 256;
};

/// Fully automatic cross-associations: alternating greedy reassignment of
/// rows and columns under the MDL cost, growing k and l one split at a time
/// while the converged cost strictly decreases. Deterministic.
CoClustering faca(const DiscreteMatrix& dm, const FacaOptions& options = {});

struct Purity {
  std::vector<double> per_block;  // k * l
  double global = 0.0;            // size-weighted mean
};

Purity purity(const CoClustering& cc);

/// Keeps row groups fixed and recursively splits every column group larger
/// than `max_leaf` with column-only cross-associations; falls back to a
/// balanced bisection (flagged `forced`) when no split lowers the cost.
CoClustering refine_hierarchy(const DiscreteMatrix& dm, const CoClustering& cc, std::size_t max_leaf = 50);

}  // namespace rw
