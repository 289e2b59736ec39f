#include "reweighter/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reweighter/error.hpp"
#include "reweighter/rng.hpp"
#include "reweighter/tsne.hpp"

namespace rw {

namespace {

constexpr int kBarycenterSweeps = 3;

std::vector<std::size_t> positions_of(std::span<const std::size_t> order) {
  std::vector<std::size_t> pos(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = p;
  return pos;
}

// Reorders `order` (one side) by the weighted mean position of each
// cluster's links on the other side. Unlinked clusters keep their position.
void barycenter_sweep(std::span<const Link> links, bool rows, std::vector<std::size_t>* order,
                      const std::vector<std::size_t>& other_order) {
  const auto other_pos = positions_of(other_order);
  const auto own_pos = positions_of(*order);
  std::vector<double> num(order->size(), 0.0), den(order->size(), 0.0);
  for (const Link& l : links) {
    const std::size_t self = rows ? l.row_cluster : l.col_cluster;
    const std::size_t other = rows ? l.col_cluster : l.row_cluster;
    num[self] += l.mass() * static_cast<double>(other_pos[other]);
    den[self] += l.mass();
  }
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t c = 0; c < order->size(); ++c) {
    const double bary = den[c] > 0.0 ? num[c] / den[c] : static_cast<double>(own_pos[c]);
    keyed.emplace_back(bary, own_pos[c]);
  }
  std::vector<std::size_t> idx(order->size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return keyed[a] < keyed[b]; });
  *order = idx;
}

bool improve_by_swaps(std::span<const Link> links, std::vector<std::size_t>* swap_side,
                      std::vector<std::size_t>* rows, std::vector<std::size_t>* cols, long* best) {
  for (std::size_t p = 0; p + 1 < swap_side->size(); ++p) {
    std::swap((*swap_side)[p], (*swap_side)[p + 1]);
    const long c = count_crossings(links, *rows, *cols);
    if (c < *best) {
      *best = c;
      return true;
    }
    std::swap((*swap_side)[p], (*swap_side)[p + 1]);
  }
  return false;
}

double factorial_bound(std::size_t n, double cap) {
  double f = 1.0;
  for (std::size_t i = 2; i <= n && f <= cap; ++i) f *= static_cast<double>(i);
  return f;
}

double squared_distance(const Matrix& x, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.cols(); ++k) {
    const double d = x(a, k) - x(b, k);
    s += d * d;
  }
  return s;
}

Matrix gather_features(const Dataset& ds, std::span<const SampleId> ids, std::span<const std::size_t> members) {
  Matrix m(0, ds.feature_dim());
  for (std::size_t idx : members) m.append_row(ds.at(ids[idx]).features);
  return m;
}

}  // namespace

std::vector<Link> compute_links(const Matrix& g, std::span<const double> w_v,
                                const std::vector<std::vector<std::size_t>>& row_clusters,
                                const std::vector<std::vector<std::size_t>>& col_clusters, double context_frac) {
  if (w_v.size() != g.rows()) throw Error(errc::kDimensionMismatch, "w_v does not match the influence rows");
  std::vector<Link> links;
  double heaviest = 0.0;
  for (std::size_t r = 0; r < row_clusters.size(); ++r) {
    for (std::size_t c = 0; c < col_clusters.size(); ++c) {
      Link l;
      l.row_cluster = r;
      l.col_cluster = c;
      for (std::size_t i : row_clusters[r]) {
        for (std::size_t j : col_clusters[c]) {
          const double v = w_v[i] * g(i, j);
          if (v > 0) l.pos_mass += v;
          else l.neg_mass += v;
        }
      }
      heaviest = std::max(heaviest, l.mass());
      links.push_back(l);
    }
  }
  for (Link& l : links) l.context = l.mass() < context_frac * heaviest;
  return links;
}

long count_crossings(std::span<const Link> links, std::span<const std::size_t> row_order,
                     std::span<const std::size_t> col_order) {
  const auto rp = positions_of(row_order);
  const auto cp = positions_of(col_order);
  long crossings = 0;
  for (std::size_t a = 0; a < links.size(); ++a) {
    if (links[a].context) continue;
    for (std::size_t b = a + 1; b < links.size(); ++b) {
      if (links[b].context) continue;
      const std::size_t ra = rp[links[a].row_cluster], rb = rp[links[b].row_cluster];
      const std::size_t ca = cp[links[a].col_cluster], cb = cp[links[b].col_cluster];
      if ((ra < rb && ca > cb) || (ra > rb && ca < cb)) ++crossings;
    }
  }
  return crossings;
}

ClusterOrder order_clusters(std::span<const Link> links, std::size_t num_rows, std::size_t num_cols,
                            std::size_t exhaustive_limit) {
  if (num_rows == 0 || num_cols == 0) throw Error(errc::kInvalidArgument, "need at least one cluster per side");
  for (const Link& l : links)
    if (l.row_cluster >= num_rows || l.col_cluster >= num_cols)
      throw Error(errc::kInvalidArgument, "link refers to an unknown cluster");

  ClusterOrder out;
  out.row_order.resize(num_rows);
  out.col_order.resize(num_cols);
  std::iota(out.row_order.begin(), out.row_order.end(), std::size_t{0});
  std::iota(out.col_order.begin(), out.col_order.end(), std::size_t{0});
  for (int s = 0; s < kBarycenterSweeps; ++s) {
    barycenter_sweep(links, false, &out.col_order, out.row_order);
    barycenter_sweep(links, true, &out.row_order, out.col_order);
  }
  out.initial_crossings = count_crossings(links, out.row_order, out.col_order);
  long best = out.initial_crossings;
  while (best > 0) {
    if (improve_by_swaps(links, &out.row_order, &out.row_order, &out.col_order, &best)) continue;
    if (improve_by_swaps(links, &out.col_order, &out.row_order, &out.col_order, &best)) continue;
    break;
  }

  const double cap = static_cast<double>(exhaustive_limit);
  if (best > 0 && factorial_bound(num_rows, cap) * factorial_bound(num_cols, cap) <= cap) {
    std::vector<std::size_t> rows(num_rows), cols(num_cols);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    do {
      std::iota(cols.begin(), cols.end(), std::size_t{0});
      do {
        const long c = count_crossings(links, rows, cols);
        if (c < best) {
          best = c;
          out.row_order = rows;
          out.col_order = cols;
        }
      } while (best > 0 && std::next_permutation(cols.begin(), cols.end()));
    } while (best > 0 && std::next_permutation(rows.begin(), rows.end()));
  }
  out.crossings = best;
  return out;
}

std::size_t Glyph::bar() const {
  if (sign == WeightSign::Positive) return consistency == Consistency::Consistent ? 0 : 1;
  return consistency == Consistency::Inconsistent ? 2 : 3;
}

std::vector<Glyph> classify_glyphs(std::span<const double> w_s, std::span<const double> confidences) {
  if (w_s.size() != confidences.size())
    throw Error(errc::kDimensionMismatch, "weights and confidences differ in length");
  std::vector<Glyph> out(w_s.size());
  for (std::size_t j = 0; j < w_s.size(); ++j) {
    const bool high = confidences[j] >= 0.5;
    const bool positive = w_s[j] >= 0.0;
    out[j].sign = positive ? WeightSign::Positive : WeightSign::Negative;
    out[j].consistency = high == positive ? Consistency::Consistent : Consistency::Inconsistent;
  }
  return out;
}

BarCounts bar_counts(std::span<const Glyph> glyphs, std::span<const std::size_t> members) {
  BarCounts counts{0, 0, 0, 0};
  for (std::size_t j : members) ++counts[glyphs[j].bar()];
  return counts;
}

std::vector<bool> collapse_policy(std::span<const BarCounts> counts, double threshold_frac) {
  std::vector<bool> out;
  for (const BarCounts& c : counts) {
    const std::size_t total = c[0] + c[1] + c[2] + c[3];
    const std::size_t inconsistent = c[1] + c[2];
    out.push_back(total > 0 &&
                  static_cast<double>(inconsistent) < threshold_frac * static_cast<double>(total));
  }
  return out;
}

std::vector<double> representative_weights(const Matrix& features, const std::vector<bool>& in_quality) {
  const std::size_t n = features.rows();
  if (in_quality.size() != n) throw Error(errc::kDimensionMismatch, "quality flags do not match the members");
  std::vector<double> weights(n, 0.0);
  if (n == 0) return weights;
  const std::size_t k = std::min<std::size_t>(10, n - 1);
  std::vector<double> rho(n, 0.0);
  std::vector<double> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist.push_back(std::sqrt(squared_distance(features, i, j)));
    std::sort(dist.begin(), dist.end());
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += dist[t];
    rho[i] = static_cast<double>(k) / (s + 1e-12);
  }
  const double rho_min = *std::min_element(rho.begin(), rho.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = rho[i] > 0.0 ? std::clamp(rho_min / rho[i], 0.0, 1.0) : 1.0;
    weights[i] = inv + (in_quality[i] ? 1.0 : 0.0);
  }
  return weights;
}

std::vector<SampleId> sample_representatives(std::span<const SampleId> members, const Matrix& features,
                                             const std::vector<bool>& in_quality, std::size_t budget,
                                             std::uint64_t seed) {
  if (budget < 1) throw Error(errc::kInvalidArgument, "budget must be >= 1");
  if (features.rows() != members.size()) throw Error(errc::kDimensionMismatch, "features do not match the members");
  std::vector<SampleId> out;
  if (members.size() <= budget) {
    out.assign(members.begin(), members.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<double> weights = representative_weights(features, in_quality);
  Rng rng(seed);
  for (std::size_t draw = 0; draw < budget; ++draw) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = SIZE_MAX, last = SIZE_MAX;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last = i;
      acc += weights[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    if (pick == SIZE_MAX) pick = last;  // rounding at the top end
    out.push_back(members[pick]);
    weights[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Contributors top_contributors(const BipartiteGraph& graph, Side side, SampleId id, std::size_t k) {
  const auto& ids = side == Side::Training ? graph.train_ids : graph.val_ids;
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(errc::kUnknownSample, "unknown sample id " + std::to_string(id));
  const std::size_t idx = static_cast<std::size_t>(it - ids.begin());

  std::vector<Contribution> all;
  if (side == Side::Training) {
    for (std::size_t i = 0; i < graph.m(); ++i) all.push_back({graph.val_ids[i], graph.val_weights[i] * graph.g(i, idx)});
  } else {
    for (std::size_t j = 0; j < graph.n(); ++j)
      all.push_back({graph.train_ids[j], graph.val_weights[idx] * graph.g(idx, j)});
  }
  Contributors out;
  for (const Contribution& c : all) {
    if (c.value > 0) out.positive.push_back(c);
    if (c.value < 0) out.negative.push_back(c);
  }
  std::sort(out.positive.begin(), out.positive.end(), [](const Contribution& a, const Contribution& b) {
    return a.value != b.value ? a.value > b.value : a.id < b.id;
  });
  std::sort(out.negative.begin(), out.negative.end(), [](const Contribution& a, const Contribution& b) {
    return a.value != b.value ? a.value < b.value : a.id < b.id;
  });
  if (out.positive.size() > k) out.positive.resize(k);
  if (out.negative.size() > k) out.negative.resize(k);
  return out;
}

DiffResult compute_diff(std::span<const SampleId> ids, std::span<const double> old_w, std::span<const double> new_w,
                        double threshold_pct) {
  if (ids.size() != old_w.size() || ids.size() != new_w.size())
    throw Error(errc::kDimensionMismatch, "diff inputs differ in length");
  if (!(threshold_pct >= 0.0 && threshold_pct <= 100.0))
    throw Error(errc::kInvalidArgument, "threshold_pct must be in [0, 100]");
  const std::size_t n = ids.size();
  DiffResult out;
  out.threshold_pct = threshold_pct;
  out.entries.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.entries[j] = {ids[j], old_w[j], new_w[j], false};
  // The epsilon keeps e.g. 10% of 30 at exactly 3 despite 0.1 * 30 rounding up.
  const double raw = std::ceil(threshold_pct / 100.0 * static_cast<double>(n) - 1e-9);
  const std::size_t count = std::min(n, static_cast<std::size_t>(std::max(0.0, raw)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::abs(new_w[a] - old_w[a]), db = std::abs(new_w[b] - old_w[b]);
    return da != db ? da > db : ids[a] < ids[b];
  });
  for (std::size_t t = 0; t < count; ++t) out.entries[idx[t]].flagged = true;
  return out;
}

ClusterLayout build_layout(const Dataset& ds, const BipartiteGraph& graph, const CoClustering& cc,
                           const QualitySets& q, const LayoutConfig& config) {
  if (cc.row_group.size() != graph.m() || cc.col_group.size() != graph.n())
    throw Error(errc::kDimensionMismatch, "clustering does not match the graph");
  ClusterLayout out;
  out.row_clusters = cc.row_groups();
  out.col_clusters = cc.leaf_col_groups();
  const std::vector<double> w_s = training_weights(graph);

  out.links = compute_links(graph.g, graph.val_weights, out.row_clusters, out.col_clusters, config.context_frac);
  ClusterOrder order = order_clusters(out.links, out.row_clusters.size(), out.col_clusters.size());
  out.row_order = std::move(order.row_order);
  out.col_order = std::move(order.col_order);
  out.crossings = order.crossings;

  out.val_positions.resize(graph.m());
  out.train_positions.resize(graph.n());
  for (std::size_t r = 0; r < out.row_clusters.size(); ++r) {
    const auto& members = out.row_clusters[r];
    const Matrix features = gather_features(ds, graph.val_ids, members);
    const auto x = project_1d(features, config.seed + r);
    double sum = 0.0;
    for (std::size_t t = 0; t < members.size(); ++t) {
      out.val_positions[members[t]] = {x[t], graph.val_weights[members[t]]};
      sum += graph.val_weights[members[t]];
    }
    out.avg_val_weight.push_back(members.empty() ? 0.0 : sum / static_cast<double>(members.size()));
    std::vector<SampleId> ids;
    for (std::size_t i : members) ids.push_back(graph.val_ids[i]);
    out.row_representatives.push_back(sample_representatives(ids, features, std::vector<bool>(ids.size(), false),
                                                             config.representative_budget, config.seed + r));
  }

  std::vector<double> conf = graph.confidences;
  if (conf.empty()) conf.assign(graph.n(), 1.0);
  out.glyphs = classify_glyphs(w_s, conf);
  for (std::size_t c = 0; c < out.col_clusters.size(); ++c) {
    const auto& members = out.col_clusters[c];
    const Matrix features = gather_features(ds, graph.train_ids, members);
    const auto x = project_1d(features, config.seed + 1000003 + c);
    for (std::size_t t = 0; t < members.size(); ++t) out.train_positions[members[t]] = {x[t], w_s[members[t]]};
    out.bar_counts.push_back(bar_counts(out.glyphs, members));
    std::vector<SampleId> ids;
    std::vector<bool> flags;
    for (std::size_t j : members) {
      ids.push_back(graph.train_ids[j]);
      flags.push_back(q.entries.contains(graph.train_ids[j]));
    }
    out.col_representatives.push_back(
        sample_representatives(ids, features, flags, config.representative_budget, config.seed + 1000003 + c));
  }
  out.collapsed = collapse_policy(out.bar_counts, config.collapse_threshold);
  return out;
}

}  // namespace rw
