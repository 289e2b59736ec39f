#include "reweighter/experiment.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"

#include "reweighter/error.hpp"
#include "reweighter/influence.hpp"

namespace rw {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Uniform: return "uniform";
    case RunMode::Reweight: return "reweight";
    case RunMode::Improve: return "improve";
  }
  return "uniform";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "uniform") return RunMode::Uniform;
  if (s == "reweight") return RunMode::Reweight;
  if (s == "improve") return RunMode::Improve;
  throw Error(errc::kInvalidArgument, "unknown mode '" + s + "' (expected uniform, reweight or improve)");
}

std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw Error(errc::kDimensionMismatch, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, then the rank-sum statistic.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t t = start; t < end; ++t)
      if (positive[idx[t]]) rank_sum += avg_rank;
    start = end;
  }
  for (bool p : positive) pos += p;
  const std::size_t neg = positive.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

RunMetrics run_experiment(const Dataset& ds, RunMode mode, const ExperimentConfig& config) {
  RunMetrics out;
  out.mode = mode;
  out.seed = config.train.seed;
  const ModelState base = train_model(ds, std::nullopt, config.train);
  ModelState final_model = base;

  if (mode != RunMode::Uniform) {
    BipartiteGraph graph = build_influence(base, ds, config.confidence_folds);
    if (mode == RunMode::Improve) {
      QualitySets q;
      q.refresh_from_confidence(graph.train_ids, graph.confidences, config.tau_hi, config.tau_lo);
      const TrainingSet data = make_training_set(ds);
      const OptimizeResult opt =
          optimize_weights(graph, q, data.labels, ds.num_classes(), WeightBounds(graph.m()), config.solver);
      graph.val_weights = opt.w_v;
    }
    const std::vector<double> w_s = training_weights(graph);
    final_model = fit(make_training_set(ds), w_s, config.train);

    bool all_known = true;
    std::vector<double> scores;
    std::vector<bool> noisy;
    for (std::size_t j = 0; j < graph.n(); ++j) {
      const Sample& s = ds.at(graph.train_ids[j]);
      all_known = all_known && s.true_label.has_value();
      scores.push_back(-w_s[j]);
      noisy.push_back(s.mislabeled());
    }
    if (all_known) out.noise_auc = auc(scores, noisy);
  }

  const Accuracy acc = evaluate(final_model, ds, ds.test_ids());
  out.test_accuracy = acc.accuracy;
  out.per_class_accuracy = acc.per_class;
  return out;
}

std::string metrics_to_json_text(const RunMetrics& m) {
  // nlohmann::json objects keep keys sorted.
  nlohmann::json j;
  j["mode"] = to_string(m.mode);
  j["seed"] = m.seed;
  j["test_accuracy"] = m.test_accuracy;
  j["per_class_accuracy"] = m.per_class_accuracy;
  if (m.noise_auc) j["noise_auc"] = *m.noise_auc;
  return j.dump();
}

}  // namespace rw
