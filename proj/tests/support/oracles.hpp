#pragma once
// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "reweighter/cocluster.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/layout.hpp"
#include "reweighter/matrix.hpp"
#include "reweighter/quality.hpp"
#include "reweighter/rng.hpp"

namespace rw::testing {

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Central finite difference of f along coordinate k of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t k, double h = 1e-5) {
  const double x0 = x[k];
  x[k] = x0 + h;
  const double up = f(x);
  x[k] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// Adjusted Rand index of two labelings of the same items.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto c2 = [](double n) { return n * (n - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, n] : joint) index += c2(n);
  for (const auto& [key, n] : ca) sa += c2(n);
  for (const auto& [key, n] : cb) sb += c2(n);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Planted block matrix: row block of row r is r * kr / rows, column block of
/// column c is c * kc / cols; block (R, C) holds category `pattern(R, C)`,
/// and each entry is replaced by a different random category with
/// probability `noise`.
struct Planted {
  DiscreteMatrix dm;
  std::vector<std::size_t> row_truth;
  std::vector<std::size_t> col_truth;
};

inline Planted planted_blocks(std::size_t rows, std::size_t cols, std::size_t kr, std::size_t kc, double noise,
                              std::uint64_t seed, const std::function<Category(std::size_t, std::size_t)>& pattern) {
  Planted p;
  p.dm.rows = rows;
  p.dm.cols = cols;
  p.dm.entries.resize(rows * cols);
  Rng rng(seed);
  for (std::size_t r = 0; r < rows; ++r) p.row_truth.push_back(r * kr / rows);
  for (std::size_t c = 0; c < cols; ++c) p.col_truth.push_back(c * kc / cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      Category cat = pattern(p.row_truth[r], p.col_truth[c]);
      if (rng.uniform() < noise) {
        const auto shift = static_cast<std::uint8_t>(1 + rng.below(2));
        cat = static_cast<Category>((static_cast<std::uint8_t>(cat) + shift) % 3);
      }
      p.dm.entries[r * cols + c] = cat;
    }
  return p;
}

/// Category of block (R, C) in the 3x3 planted acceptance instance; every
/// row block and every column block has a distinct profile.
inline Category three_by_three(std::size_t r, std::size_t c) {
  static const Category table[3][3] = {{Category::Pos, Category::Neg, Category::Neu},
                                       {Category::Neg, Category::Neu, Category::Pos},
                                       {Category::Pos, Category::Pos, Category::Neg}};
  return table[r][c];
}

/// Reference crossing count: every pair of visible links, compared by the
/// positions of their endpoints.
inline long brute_crossings(const std::vector<Link>& links, const std::vector<std::size_t>& row_order,
                            const std::vector<std::size_t>& col_order) {
  std::vector<std::size_t> rpos(row_order.size()), cpos(col_order.size());
  for (std::size_t p = 0; p < row_order.size(); ++p) rpos[row_order[p]] = p;
  for (std::size_t p = 0; p < col_order.size(); ++p) cpos[col_order[p]] = p;
  long count = 0;
  for (std::size_t a = 0; a < links.size(); ++a)
    for (std::size_t b = a + 1; b < links.size(); ++b) {
      if (links[a].context || links[b].context) continue;
      const long dr = static_cast<long>(rpos[links[a].row_cluster]) - static_cast<long>(rpos[links[b].row_cluster]);
      const long dc = static_cast<long>(cpos[links[a].col_cluster]) - static_cast<long>(cpos[links[b].col_cluster]);
      if ((dr < 0 && dc > 0) || (dr > 0 && dc < 0)) ++count;
    }
  return count;
}

/// Minimum crossings over every pair of permutations.
inline long brute_min_crossings(const std::vector<Link>& links, std::size_t k, std::size_t l) {
  std::vector<std::size_t> rows(k), cols(l);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  long best = -1;
  do {
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    do {
      const long c = brute_crossings(links, rows, cols);
      if (best < 0 || c < best) best = c;
    } while (std::next_permutation(cols.begin(), cols.end()));
  } while (std::next_permutation(rows.begin(), rows.end()));
  return best;
}

/// Random k x l link set with random signed masses; roughly half the pairs
/// are linked.
inline std::vector<Link> random_links(std::size_t k, std::size_t l, Rng& rng) {
  std::vector<Link> links;
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < l; ++c) {
      if (rng.uniform() < 0.5) continue;
      Link link;
      link.row_cluster = r;
      link.col_cluster = c;
      link.pos_mass = rng.uniform() * 5.0;
      link.neg_mass = -rng.uniform() * 5.0;
      links.push_back(link);
    }
  return links;
}

/// Flagged ids by a full sort on (|delta| desc, id asc).
inline std::vector<SampleId> sort_oracle_flags(const std::vector<SampleId>& ids, const std::vector<double>& old_w,
                                               const std::vector<double>& new_w, double pct) {
  std::vector<std::size_t> idx(ids.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::abs(new_w[a] - old_w[a]), db = std::abs(new_w[b] - old_w[b]);
    if (da != db) return da > db;
    return ids[a] < ids[b];
  });
  const auto count = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(ids.size()) - 1e-9));
  std::vector<SampleId> out;
  for (std::size_t t = 0; t < std::min(count, idx.size()); ++t) out.push_back(ids[idx[t]]);
  std::sort(out.begin(), out.end());
  return out;
}

/// Ranking oracle for the sample view: all nonzero products, sorted.
inline Contributors rank_oracle(const BipartiteGraph& g, Side side, std::size_t index, std::size_t k) {
  std::vector<Contribution> all;
  if (side == Side::Training) {
    for (std::size_t i = 0; i < g.m(); ++i) all.push_back({g.val_ids[i], g.val_weights[i] * g.g(i, index)});
  } else {
    for (std::size_t j = 0; j < g.n(); ++j) all.push_back({g.train_ids[j], g.val_weights[index] * g.g(index, j)});
  }
  Contributors out;
  std::vector<Contribution> pos, neg;
  for (const auto& c : all) {
    if (c.value > 0) pos.push_back(c);
    if (c.value < 0) neg.push_back(c);
  }
  std::sort(pos.begin(), pos.end(), [](const Contribution& a, const Contribution& b) {
    return a.value != b.value ? a.value > b.value : a.id < b.id;
  });
  std::sort(neg.begin(), neg.end(), [](const Contribution& a, const Contribution& b) {
    return a.value != b.value ? a.value < b.value : a.id < b.id;
  });
  pos.resize(std::min(pos.size(), k));
  neg.resize(std::min(neg.size(), k));
  out.positive = pos;
  out.negative = neg;
  return out;
}

/// The 2 x 4 toy instance: v1 supports the high-quality columns s1, s2, s4
/// and opposes the low-quality s3; v2 does the reverse strongly enough that
/// uniform weights get s2, s3 and s4 wrong. The S+ weight mass stays positive
/// along the way to w^v_2 = 0, so the balancedness term is defined throughout.
struct Toy {
  Matrix g;
  std::vector<double> w_v;
  ColumnSets cols;
  std::vector<int> labels;
};

inline Toy toy_instance() {
  Toy t;
  t.g = Matrix(2, 4);
  const double v1[4] = {3.0, 0.5, -0.5, 0.5};
  const double v2[4] = {-0.5, -1.0, 1.0, -1.0};
  for (std::size_t j = 0; j < 4; ++j) {
    t.g(0, j) = v1[j];
    t.g(1, j) = v2[j];
  }
  t.w_v = {1.0, 1.0};
  t.cols.plus = {0, 1, 3};
  t.cols.minus = {2};
  t.labels = {0, 1, 0, 1};
  return t;
}

}  // namespace rw::testing
