#include "reweighter/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "reweighter/error.hpp"

namespace rw {

namespace {

constexpr double kMassEps = 1e-12;

// log(1 + e^x) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double safe_log_abs(double p) { return std::log(std::max(std::abs(p), std::numeric_limits<double>::min())); }

std::string dump_iterate(std::span<const double> w_v, double a, double b) {
  std::ostringstream out;
  out << "w_v=[";
  for (std::size_t i = 0; i < w_v.size(); ++i) out << (i ? "," : "") << w_v[i];
  out << "] log_sigma_c=" << a << " log_sigma_b=" << b;
  return out.str();
}

}  // namespace

std::vector<SampleId> QualitySets::plus() const {
  std::vector<SampleId> out;
  for (const auto& [id, e] : entries)
    if (e.label == QualityLabel::High) out.push_back(id);
  return out;
}

std::vector<SampleId> QualitySets::minus() const {
  std::vector<SampleId> out;
  for (const auto& [id, e] : entries)
    if (e.label == QualityLabel::Low) out.push_back(id);
  return out;
}

void QualitySets::verify(SampleId id, QualityLabel label) {
  entries[id] = Entry{label, Provenance::UserVerified};
}

void QualitySets::refresh_from_confidence(std::span<const SampleId> train_ids, std::span<const double> confidences,
                                          double tau_hi, double tau_lo) {
  if (train_ids.size() != confidences.size())
    throw Error(errc::kDimensionMismatch, "confidences do not align with training ids");
  std::erase_if(entries, [](const auto& kv) { return kv.second.provenance == Provenance::Confidence; });
  for (std::size_t j = 0; j < train_ids.size(); ++j) {
    if (entries.contains(train_ids[j])) continue;
    if (confidences[j] >= tau_hi)
      entries[train_ids[j]] = Entry{QualityLabel::High, Provenance::Confidence};
    else if (confidences[j] <= tau_lo)
      entries[train_ids[j]] = Entry{QualityLabel::Low, Provenance::Confidence};
  }
}

ColumnSets resolve_columns(const QualitySets& q, std::span<const SampleId> train_ids) {
  std::unordered_map<SampleId, std::size_t> column;
  column.reserve(train_ids.size());
  for (std::size_t j = 0; j < train_ids.size(); ++j) column.emplace(train_ids[j], j);
  ColumnSets cols;
  for (const auto& [id, e] : q.entries) {
    auto it = column.find(id);
    if (it == column.end())
      throw Error(errc::kUnknownSample, "quality set references unknown training id " + std::to_string(id));
    (e.label == QualityLabel::High ? cols.plus : cols.minus).push_back(it->second);
  }
  std::sort(cols.plus.begin(), cols.plus.end());
  std::sort(cols.minus.begin(), cols.minus.end());
  return cols;
}

void WeightBounds::validate() const {
  if (lower.size() != upper.size()) throw Error(errc::kDimensionMismatch, "bounds vectors differ in length");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] && !(*lower[i] >= 0.0)) throw Error(errc::kInvalidArgument, "lower bound must be >= 0");
    if (upper[i] && !(*upper[i] >= 0.0)) throw Error(errc::kInvalidArgument, "upper bound must be >= 0");
    if (lower[i] && upper[i] && *lower[i] > *upper[i])
      throw Error(errc::kInvalidArgument, "lower bound exceeds upper bound for row " + std::to_string(i));
  }
}

LossWithGradient correctness_loss(std::span<const double> w_s, const ColumnSets& cols) {
  if (cols.plus.empty() && cols.minus.empty())
    throw Error(errc::kNoQualityEvidence, "no quality evidence: S+ and S- are both empty");
  LossWithGradient out;
  out.grad.assign(w_s.size(), 0.0);
  for (std::size_t j : cols.plus) {
    out.value += softplus(-w_s[j]);         // -log phi(w)
    out.grad[j] = -(1.0 - sigmoid(w_s[j]));
  }
  for (std::size_t j : cols.minus) {
    out.value += softplus(w_s[j]);          // -log(1 - phi(w))
    out.grad[j] = sigmoid(w_s[j]);
  }
  return out;
}

BalanceLoss balancedness_loss(std::span<const double> w_s, const ColumnSets& cols, std::span<const int> labels,
                              int num_classes) {
  if (cols.plus.empty()) throw Error(errc::kNoQualityEvidence, "no quality evidence: S+ is empty");
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<double> mass(C, 0.0);
  double total = 0.0;
  for (std::size_t j : cols.plus) {
    const auto c = static_cast<std::size_t>(labels[j]);
    if (c >= C) throw Error(errc::kInvalidClassIndex, "invalid class index in column labels");
    mass[c] += w_s[j];
    total += w_s[j];
  }
  if (std::abs(total) <= kMassEps)
    throw Error(errc::kDegenerateWeightMass, "degenerate weight mass: S+ weights sum to ~0");

  BalanceLoss out;
  out.p.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    out.p[c] = mass[c] / total;
    if (out.p[c] != 0.0) out.value += out.p[c] * safe_log_abs(out.p[c]);
  }
  // d/dw_j for j in S_c+: (log|p_c| + 1 - sum_k p_k (log|p_k| + 1)) / T = (log|p_c| - L_b) / T
  out.grad.assign(w_s.size(), 0.0);
  for (std::size_t j : cols.plus) {
    const auto c = static_cast<std::size_t>(labels[j]);
    out.grad[j] = (safe_log_abs(out.p[c]) - out.value) / total;
  }
  return out;
}

ObjectiveEval objective(const Matrix& g, std::span<const double> w_v, const MultiTaskState& mt,
                        const ColumnSets& cols, std::span<const int> labels, int num_classes) {
  if (!(mt.sigma_c > 0.0) || !(mt.sigma_b > 0.0))
    throw Error(errc::kInvalidArgument, "sigma_c and sigma_b must be > 0");
  for (double w : w_v)
    if (!(w >= 0.0)) throw Error(errc::kInvalidArgument, "validation weights must be >= 0");
  const std::vector<double> w_s = training_weights(g, w_v);
  const LossWithGradient lc = correctness_loss(w_s, cols);
  BalanceLoss lb = balancedness_loss(w_s, cols, labels, num_classes);

  const double inv_c = 1.0 / (mt.sigma_c * mt.sigma_c);
  const double inv_b = 1.0 / (mt.sigma_b * mt.sigma_b);
  const double lb_shifted = lb.value + std::log(static_cast<double>(num_classes));

  ObjectiveEval out;
  out.report.l_c = lc.value;
  out.report.l_b = lb.value;
  out.report.p = std::move(lb.p);
  out.report.objective = inv_c * lc.value + inv_b * lb_shifted + std::log(mt.sigma_c * mt.sigma_b);

  std::vector<double> d_ws(w_s.size());
  for (std::size_t j = 0; j < w_s.size(); ++j) d_ws[j] = inv_c * lc.grad[j] + inv_b * lb.grad[j];
  out.grad_w_v.assign(g.rows(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto row = g.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * d_ws[j];
    out.grad_w_v[i] = s;
  }
  out.grad_sigma_c = -2.0 * lc.value / (mt.sigma_c * mt.sigma_c * mt.sigma_c) + 1.0 / mt.sigma_c;
  out.grad_sigma_b = -2.0 * lb_shifted / (mt.sigma_b * mt.sigma_b * mt.sigma_b) + 1.0 / mt.sigma_b;
  return out;
}

QualityReport objective(const BipartiteGraph& graph, std::span<const double> w_v, const MultiTaskState& mt,
                        const QualitySets& q, std::span<const int> labels, int num_classes) {
  const ColumnSets cols = resolve_columns(q, graph.train_ids);
  return objective(graph.g, w_v, mt, cols, labels, num_classes).report;
}

std::vector<double> project(std::span<const double> w_v, const WeightBounds& bounds) {
  std::vector<double> out(w_v.begin(), w_v.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double lo = 0.0;
    if (i < bounds.lower.size() && bounds.lower[i]) lo = std::max(lo, *bounds.lower[i]);
    if (out[i] < lo || std::isnan(out[i])) out[i] = lo;
    if (i < bounds.upper.size() && bounds.upper[i] && out[i] > *bounds.upper[i]) out[i] = *bounds.upper[i];
  }
  return out;
}

OptimizeResult optimize_weights(const Matrix& g, std::span<const double> init_w_v, const ColumnSets& cols,
                                std::span<const int> labels, int num_classes, const WeightBounds& bounds,
                                const SolverConfig& config) {
  if (init_w_v.size() != g.rows()) throw Error(errc::kDimensionMismatch, "initial weights do not match m");
  if (bounds.size() != 0 && bounds.size() != g.rows())
    throw Error(errc::kDimensionMismatch, "bounds do not match m");
  bounds.validate();

  const MultiTaskState start = config.initial_sigma.value_or(MultiTaskState{});
  std::vector<double> w = project(init_w_v, bounds);
  if (!(config.min_sigma > 0.0)) throw Error(errc::kInvalidArgument, "min_sigma must be > 0");
  if (!(config.max_log_sigma_step > 0.0)) throw Error(errc::kInvalidArgument, "max_log_sigma_step must be > 0");
  const double log_floor = std::log(config.min_sigma);
  double a = std::max(std::log(start.sigma_c), log_floor);
  double b = std::max(std::log(start.sigma_b), log_floor);

  auto eval = [&](std::span<const double> wv, double la, double lb) {
    return objective(g, wv, MultiTaskState{std::exp(la), std::exp(lb)}, cols, labels, num_classes);
  };

  OptimizeResult result;
  ObjectiveEval cur = eval(w, a, b);
  if (!std::isfinite(cur.report.objective))
    throw Error(errc::kNumerical, "objective is not finite at the start point: " + dump_iterate(w, a, b));
  result.trace.push_back(cur.report.objective);

  std::vector<double> trial(w.size());
  for (int it = 0; it < config.max_iters; ++it) {
    result.iterations = it + 1;
    const double ga = std::exp(a) * cur.grad_sigma_c;  // chain rule into log-space
    const double gb = std::exp(b) * cur.grad_sigma_b;
    double step = config.init_step;
    bool accepted = false;
    std::optional<ObjectiveEval> next;
    double ta = a, tb = b;
    for (int h = 0; h <= config.max_halvings; ++h, step *= config.shrink) {
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] - step * cur.grad_w_v[i];
      trial = project(trial, bounds);
      const double cap = config.max_log_sigma_step;
      ta = std::max(a - std::clamp(step * ga, -cap, cap), log_floor);
      tb = std::max(b - std::clamp(step * gb, -cap, cap), log_floor);
      try {
        next = eval(trial, ta, tb);
      } catch (const Error& e) {
        if (e.code() != errc::kDegenerateWeightMass) throw;
        continue;  // outside the loss domain: shrink
      }
      const double f = next->report.objective;
      if (std::isnan(f))
        throw Error(errc::kNumerical, "NaN objective at iteration " + std::to_string(it) + ": " +
                                          dump_iterate(trial, ta, tb));
      if (f <= cur.report.objective) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (it == 0) result.stationary = true;
      break;
    }
    const double delta = cur.report.objective - next->report.objective;
    w = trial;
    a = ta;
    b = tb;
    cur = std::move(*next);
    ++result.accepted_steps;
    result.trace.push_back(cur.report.objective);
    if (config.record_iterates) result.iterates.push_back(w);
    if (std::abs(delta) < config.tol) {
      result.converged = true;
      break;
    }
  }
  result.w_v = std::move(w);
  result.sigma = MultiTaskState{std::exp(a), std::exp(b)};
  return result;
}

OptimizeResult optimize_weights(const BipartiteGraph& graph, const QualitySets& q, std::span<const int> labels,
                                int num_classes, const WeightBounds& bounds, const SolverConfig& config) {
  const ColumnSets cols = resolve_columns(q, graph.train_ids);
  return optimize_weights(graph.g, graph.val_weights, cols, labels, num_classes, bounds, config);
}

}  // namespace rw
