#include "reweighter/cocluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reweighter/error.hpp"

namespace rw {

namespace {

constexpr double kCostEps = 1e-9;

double nlog2n(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

// t * H(p) in bits, from integer counts: t log2 t - sum n log2 n.
double data_bits(const BlockCounts& c) {
  const double t = static_cast<double>(c[0] + c[1] + c[2]);
  return nlog2n(t) - nlog2n(static_cast<double>(c[0])) - nlog2n(static_cast<double>(c[1])) -
         nlog2n(static_cast<double>(c[2]));
}

double block_bits(const BlockCounts& c) {
  const double t = static_cast<double>(c[0] + c[1] + c[2]);
  return data_bits(c) + 2.0 * std::log2(t + 1.0);
}

double header_bits(std::size_t k, std::size_t l, std::size_t m, std::size_t n) {
  double h = log2_star(static_cast<double>(k)) + log2_star(static_cast<double>(l));
  if (k > 0) h += static_cast<double>(m) * std::log2(static_cast<double>(k));
  if (l > 0) h += static_cast<double>(n) * std::log2(static_cast<double>(l));
  return h;
}

BlockCounts add(BlockCounts a, const BlockCounts& b) {
  for (std::size_t c = 0; c < kNumCategories; ++c) a[c] += b[c];
  return a;
}

BlockCounts sub(BlockCounts a, const BlockCounts& b) {
  for (std::size_t c = 0; c < kNumCategories; ++c) a[c] -= b[c];
  return a;
}

std::vector<std::size_t> renumber(const std::vector<std::size_t>& groups, std::size_t* count) {
  std::vector<std::size_t> map;
  std::vector<std::size_t> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::size_t g = groups[i];
    if (g >= map.size()) map.resize(g + 1, SIZE_MAX);
    if (map[g] == SIZE_MAX) map[g] = (*count)++;
    out[i] = map[g];
  }
  return out;
}

// Greedy cross-association search. Side 0 is rows, side 1 is columns.
class Search {
 public:
  Search(const DiscreteMatrix& dm, std::vector<std::size_t> row_of, std::vector<std::size_t> col_of)
      : dm_(&dm) {
    std::size_t k = 0, l = 0;
    of_[0] = renumber(row_of, &k);
    of_[1] = renumber(col_of, &l);
    ng_[0] = k;
    ng_[1] = l;
    rebuild();
  }

  double cost() const {
    double c = header_bits(ng_[0], ng_[1], dm_->rows, dm_->cols);
    for (const BlockCounts& b : counts_) c += block_bits(b);
    return c;
  }

  // One sequential pass over the elements of `side`. Returns true if
  // anything moved.
  bool sweep(int side) {
    bool moved = false;
    const std::size_t count = extent(side);
    std::vector<BlockCounts> prof;
    for (std::size_t e = 0; e < count; ++e) {
      profile(side, e, &prof);
      const std::size_t a = of_[side][e];
      std::size_t best = a;
      double best_delta = 0.0;
      for (std::size_t b = 0; b < ng_[side]; ++b) {
        if (b == a) continue;
        const double d = move_delta(side, a, b, prof);
        if (d < best_delta - kCostEps) {
          best_delta = d;
          best = b;
        }
      }
      if (best != a) {
        apply_move(side, e, a, best, prof);
        moved = true;
      }
    }
    return moved;
  }

  void converge(bool rows_frozen, std::vector<double>* trace) {
    for (int iter = 0; iter < 200; ++iter) {
      bool moved = false;
      if (!rows_frozen && sweep(0)) moved = true;
      if (sweep(1)) moved = true;
      if (!moved) break;
      if (trace) trace->push_back(cost());
    }
  }

  // Splits the group of `side` with the highest per-element data cost and
  // re-converges. Keeps the result only if the total cost strictly drops.
  bool try_split(int side, bool rows_frozen) {
    const std::size_t target = split_candidate(side);
    if (target == SIZE_MAX) return false;
    const Search saved = *this;
    const double before = cost();

    const std::size_t fresh = ng_[side];
    ng_[side] += 1;
    size_[side].push_back(0);
    rebuild();

    std::vector<BlockCounts> prof;
    const std::size_t other = static_cast<std::size_t>(1 - side);
    for (std::size_t e = 0; e < extent(side); ++e) {
      if (of_[side][e] != target || size_[side][target] <= 1) continue;
      profile(side, e, &prof);
      const double t_now = static_cast<double>(size_[side][target]);
      double with = 0.0, without = 0.0;
      for (std::size_t h = 0; h < ng_[other]; ++h) {
        const BlockCounts& bc = block(side, target, h);
        with += data_bits(bc);
        without += data_bits(sub(bc, prof[h]));
      }
      if (without / (t_now - 1.0) < with / t_now) apply_move(side, e, target, fresh, prof);
    }
    if (size_[side][fresh] == 0) {
      *this = saved;
      return false;
    }
    converge(rows_frozen, nullptr);
    if (cost() < before - kCostEps) return true;
    *this = saved;
    return false;
  }

  CoClustering result() const {
    CoClustering cc;
    cc.row_group = of_[0];
    cc.col_group = of_[1];
    cc.k = ng_[0];
    cc.l = ng_[1];
    cc.block_counts = counts_;
    cc.total_cost = cost();
    return cc;
  }

  std::size_t groups(int side) const { return ng_[side]; }

 private:
  std::size_t extent(int side) const { return side == 0 ? dm_->rows : dm_->cols; }

  Category cell(int side, std::size_t e, std::size_t x) const { return side == 0 ? (*dm_)(e, x) : (*dm_)(x, e); }

  std::size_t index(int side, std::size_t g, std::size_t h) const {
    return side == 0 ? g * ng_[1] + h : h * ng_[1] + g;
  }
  BlockCounts& block(int side, std::size_t g, std::size_t h) { return counts_[index(side, g, h)]; }

  void rebuild() {
    counts_.assign(ng_[0] * ng_[1], BlockCounts{0, 0, 0});
    for (int s = 0; s < 2; ++s) size_[s].assign(ng_[s], 0);
    for (std::size_t r = 0; r < dm_->rows; ++r) ++size_[0][of_[0][r]];
    for (std::size_t c = 0; c < dm_->cols; ++c) ++size_[1][of_[1][c]];
    for (std::size_t r = 0; r < dm_->rows; ++r)
      for (std::size_t c = 0; c < dm_->cols; ++c)
        ++counts_[of_[0][r] * ng_[1] + of_[1][c]][static_cast<std::size_t>((*dm_)(r, c))];
  }

  // Category counts of element e per group of the other side.
  void profile(int side, std::size_t e, std::vector<BlockCounts>* prof) const {
    const int other = 1 - side;
    prof->assign(ng_[other], BlockCounts{0, 0, 0});
    for (std::size_t x = 0; x < extent(other); ++x)
      ++(*prof)[of_[other][x]][static_cast<std::size_t>(cell(side, e, x))];
  }

  double move_delta(int side, std::size_t a, std::size_t b, const std::vector<BlockCounts>& prof) {
    const int other = 1 - side;
    const bool empties = size_[side][a] == 1;
    double delta = 0.0;
    for (std::size_t h = 0; h < ng_[other]; ++h) {
      const BlockCounts& ba = block(side, a, h);
      const BlockCounts& bb = block(side, b, h);
      delta -= block_bits(ba) + block_bits(bb);
      if (!empties) delta += block_bits(sub(ba, prof[h]));
      delta += block_bits(add(bb, prof[h]));
    }
    if (empties) {
      std::size_t k = ng_[0], l = ng_[1];
      (side == 0 ? k : l) -= 1;
      delta += header_bits(k, l, dm_->rows, dm_->cols) - header_bits(ng_[0], ng_[1], dm_->rows, dm_->cols);
    }
    return delta;
  }

  void apply_move(int side, std::size_t e, std::size_t a, std::size_t b, const std::vector<BlockCounts>& prof) {
    const int other = 1 - side;
    for (std::size_t h = 0; h < ng_[other]; ++h) {
      block(side, a, h) = sub(block(side, a, h), prof[h]);
      block(side, b, h) = add(block(side, b, h), prof[h]);
    }
    of_[side][e] = b;
    --size_[side][a];
    ++size_[side][b];
    if (size_[side][a] == 0) {
      for (std::size_t& g : of_[side])
        if (g > a) --g;
      --ng_[side];
      rebuild();
    }
  }

  std::size_t split_candidate(int side) {
    const int other = 1 - side;
    std::size_t best = SIZE_MAX;
    double best_cost = -1.0;
    for (std::size_t g = 0; g < ng_[side]; ++g) {
      if (size_[side][g] < 2) continue;
      double bits = 0.0;
      for (std::size_t h = 0; h < ng_[other]; ++h) bits += data_bits(block(side, g, h));
      const double per = bits / static_cast<double>(size_[side][g]);
      if (per > best_cost) {
        best_cost = per;
        best = g;
      }
    }
    return best;
  }

  const DiscreteMatrix* dm_;
  std::vector<std::size_t> of_[2];
  std::size_t ng_[2] = {0, 0};
  std::vector<std::size_t> size_[2];
  std::vector<BlockCounts> counts_;
};

void collect_leaves(const ColumnNode& node, std::vector<std::vector<std::size_t>>* out) {
  if (node.children.empty()) {
    out->push_back(node.columns);
    return;
  }
  for (const ColumnNode& c : node.children) collect_leaves(c, out);
}

ColumnNode build_node(const DiscreteMatrix& dm, const std::vector<std::size_t>& row_of,
                      std::vector<std::size_t> columns, std::size_t max_leaf) {
  ColumnNode node;
  node.columns = std::move(columns);
  if (node.columns.size() <= max_leaf) return node;

  DiscreteMatrix sub;
  sub.rows = dm.rows;
  sub.cols = node.columns.size();
  sub.epsilon = dm.epsilon;
  sub.entries.resize(sub.rows * sub.cols);
  for (std::size_t r = 0; r < sub.rows; ++r)
    for (std::size_t c = 0; c < sub.cols; ++c) sub.entries[r * sub.cols + c] = dm(r, node.columns[c]);

  Search search(sub, row_of, std::vector<std::size_t>(sub.cols, 0));
  for (int i = 0; i < 256 && search.try_split(1, true); ++i) {
  }
  std::vector<std::vector<std::size_t>> parts;
  if (search.groups(1) >= 2) {
    const CoClustering cc = search.result();
    parts.resize(cc.l);
    for (std::size_t c = 0; c < sub.cols; ++c) parts[cc.col_group[c]].push_back(node.columns[c]);
  } else {
    // Balanced bisection ordered by net sign of the column.
    std::vector<std::pair<long, std::size_t>> keyed;
    for (std::size_t c = 0; c < sub.cols; ++c) {
      long key = 0;
      for (std::size_t r = 0; r < sub.rows; ++r) {
        if (sub(r, c) == Category::Pos) ++key;
        if (sub(r, c) == Category::Neg) --key;
      }
      keyed.emplace_back(key, node.columns[c]);
    }
    std::sort(keyed.begin(), keyed.end());
    const std::size_t half = keyed.size() / 2;
    parts.resize(2);
    for (std::size_t i = 0; i < keyed.size(); ++i) parts[i < half ? 0 : 1].push_back(keyed[i].second);
    for (auto& p : parts) std::sort(p.begin(), p.end());
    node.forced = true;
  }
  for (auto& p : parts) node.children.push_back(build_node(dm, row_of, std::move(p), max_leaf));
  return node;
}

}  // namespace

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::None: return "none";
    case Normalization::ColumnMax: return "column_max";
    case Normalization::GlobalMax: return "global_max";
  }
  return "column_max";
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "none") return Normalization::None;
  if (s == "column_max") return Normalization::ColumnMax;
  if (s == "global_max") return Normalization::GlobalMax;
  throw Error(errc::kInvalidArgument, "unknown normalization '" + s + "'");
}

DiscreteMatrix discretize(const Matrix& g, double epsilon, Normalization norm) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(errc::kInvalidArgument, "epsilon must be > 0");
  DiscreteMatrix dm;
  dm.rows = g.rows();
  dm.cols = g.cols();
  dm.epsilon = epsilon;
  dm.entries.resize(dm.rows * dm.cols);
  std::vector<double> scale(dm.cols, 1.0);
  if (norm == Normalization::ColumnMax) {
    for (std::size_t c = 0; c < dm.cols; ++c) {
      double mx = 0.0;
      for (std::size_t r = 0; r < dm.rows; ++r) mx = std::max(mx, std::abs(g(r, c)));
      scale[c] = mx > 0.0 ? mx : 1.0;
    }
  } else if (norm == Normalization::GlobalMax) {
    double mx = 0.0;
    for (double v : g.data()) mx = std::max(mx, std::abs(v));
    std::fill(scale.begin(), scale.end(), mx > 0.0 ? mx : 1.0);
  }
  for (std::size_t r = 0; r < dm.rows; ++r) {
    for (std::size_t c = 0; c < dm.cols; ++c) {
      const double v = g(r, c) / scale[c];
      Category cat = Category::Neu;
      if (v >= epsilon) cat = Category::Pos;
      else if (v <= -epsilon) cat = Category::Neg;
      dm.entries[r * dm.cols + c] = cat;
    }
  }
  return dm;
}

std::vector<std::vector<std::size_t>> CoClustering::row_groups() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t r = 0; r < row_group.size(); ++r) out[row_group[r]].push_back(r);
  return out;
}

std::vector<std::vector<std::size_t>> CoClustering::col_groups() const {
  std::vector<std::vector<std::size_t>> out(l);
  for (std::size_t c = 0; c < col_group.size(); ++c) out[col_group[c]].push_back(c);
  return out;
}

std::vector<std::vector<std::size_t>> CoClustering::leaf_col_groups() const {
  if (!col_children) return col_groups();
  std::vector<std::vector<std::size_t>> out;
  for (const ColumnNode& n : *col_children) collect_leaves(n, &out);
  return out;
}

double log2_star(double n) {
  double bits = std::log2(2.865064);
  double x = n;
  while (x > 1.0) {
    x = std::log2(x);
    if (x <= 0.0) break;
    bits += x;
  }
  return bits;
}

double code_cost(const CoClustering& cc) {
  double c = header_bits(cc.k, cc.l, cc.row_group.size(), cc.col_group.size());
  for (const BlockCounts& b : cc.block_counts) c += block_bits(b);
  return c;
}

CoClustering make_coclustering(const DiscreteMatrix& dm, std::vector<std::size_t> row_group,
                               std::vector<std::size_t> col_group) {
  if (row_group.size() != dm.rows || col_group.size() != dm.cols)
    throw Error(errc::kDimensionMismatch, "partition does not match the matrix shape");
  return Search(dm, std::move(row_group), std::move(col_group)).result();
}

CoClustering faca(const DiscreteMatrix& dm, const FacaOptions& options) {
  std::vector<std::size_t> rows(dm.rows, 0), cols(dm.cols, 0);
  if (options.warm_start && options.warm_start->row_group.size() == dm.rows &&
      options.warm_start->col_group.size() == dm.cols) {
    rows = options.warm_start->row_group;
    cols = options.warm_start->col_group;
  }
  Search search(dm, rows, cols);
  if (dm.rows == 0 || dm.cols == 0) return search.result();
  if (options.cost_trace) options.cost_trace->push_back(search.cost());
  search.converge(false, options.cost_trace);
  for (int i = 0; i < options.max_splits; ++i) {
    bool improved = false;
    if (search.try_split(0, false)) {
      improved = true;
      if (options.cost_trace) options.cost_trace->push_back(search.cost());
    }
    if (search.try_split(1, false)) {
      improved = true;
      if (options.cost_trace) options.cost_trace->push_back(search.cost());
    }
    if (!improved) break;
  }
  return search.result();
}

Purity purity(const CoClustering& cc) {
  Purity p;
  p.per_block.assign(cc.block_counts.size(), 0.0);
  double total = 0.0, weighted = 0.0;
  for (std::size_t b = 0; b < cc.block_counts.size(); ++b) {
    const BlockCounts& c = cc.block_counts[b];
    const std::size_t t = c[0] + c[1] + c[2];
    if (t == 0) continue;
    const std::size_t mx = std::max({c[0], c[1], c[2]});
    p.per_block[b] = static_cast<double>(mx) / static_cast<double>(t);
    total += static_cast<double>(t);
    weighted += static_cast<double>(mx);
  }
  p.global = total > 0.0 ? weighted / total : 0.0;
  return p;
}

CoClustering refine_hierarchy(const DiscreteMatrix& dm, const CoClustering& cc, std::size_t max_leaf) {
  if (max_leaf < 1) throw Error(errc::kInvalidArgument, "max_leaf must be >= 1");
  CoClustering out = cc;
  out.col_children.reset();
  const auto groups = cc.col_groups();
  bool any = false;
  for (const auto& g : groups) any = any || g.size() > max_leaf;
  if (!any) return out;
  std::vector<ColumnNode> nodes;
  for (const auto& g : groups) nodes.push_back(build_node(dm, cc.row_group, g, max_leaf));
  out.col_children = std::move(nodes);
  return out;
}

}  // namespace rw
