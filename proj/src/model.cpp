#include "reweighter/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "reweighter/error.hpp"
#include "reweighter/rng.hpp"

namespace rw {

namespace {

void check_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(errc::kInvalidArgument, "non-finite feature value");
}

// Softmax of theta * [x; 1] written into `out`.
void softmax_into(const Matrix& theta, std::span<const double> x, std::vector<double>& out) {
  const std::size_t C = theta.rows();
  const std::size_t d = theta.cols() - 1;
  out.resize(C);
  double zmax = -INFINITY;
  for (std::size_t c = 0; c < C; ++c) {
    const auto w = theta.row(c);
    double z = w[d];
    for (std::size_t k = 0; k < d; ++k) z += w[k] * x[k];
    out[c] = z;
    zmax = std::max(zmax, z);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = std::exp(out[c] - zmax);
    total += out[c];
  }
  for (std::size_t c = 0; c < C; ++c) out[c] /= total;
}

}  // namespace

TrainingSet make_training_set(const Dataset& ds, const std::map<SampleId, int>& label_overrides) {
  TrainingSet set;
  set.num_classes = static_cast<std::size_t>(ds.num_classes());
  set.features = Matrix(0, ds.feature_dim());
  for (SampleId id : ds.train_ids()) {
    const Sample& s = ds.at(id);
    set.features.append_row(s.features);
    auto it = label_overrides.find(id);
    set.labels.push_back(it == label_overrides.end() ? s.observed_label : it->second);
  }
  return set;
}

double training_loss(const ModelState& model, const TrainingSet& data, std::span<const double> weights) {
  const std::size_t d = model.feature_dim();
  double total_w = 0.0, loss = 0.0;
  std::vector<double> p;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double w = weights.empty() ? 1.0 : std::max(weights[j], 0.0);
    if (w == 0.0) continue;
    softmax_into(model.theta, data.features.row(j), p);
    loss += w * -std::log(std::max(p[static_cast<std::size_t>(data.labels[j])], 1e-300));
    total_w += w;
  }
  double reg = 0.0;
  for (std::size_t c = 0; c < model.theta.rows(); ++c)
    for (std::size_t k = 0; k < d; ++k) reg += model.theta(c, k) * model.theta(c, k);
  return loss / total_w + 0.5 * model.config.l2 * reg;
}

ModelState fit(const TrainingSet& data, std::span<const double> weights, const TrainConfig& config) {
  const std::size_t n = data.size();
  const std::size_t C = data.num_classes;
  const std::size_t d = data.features.cols();
  if (!weights.empty() && weights.size() != n)
    throw Error(errc::kInvalidArgument, "sample weights do not align with the training split");
  if (config.learning_rate <= 0.0) throw Error(errc::kInvalidArgument, "learning rate must be > 0");
  check_finite(data.features.data());

  std::vector<double> w(n, 1.0);
  if (!weights.empty())
    for (std::size_t j = 0; j < n; ++j) w[j] = std::isfinite(weights[j]) ? std::max(weights[j], 0.0) : 0.0;
  const double total_w = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total_w > 0.0)) throw Error(errc::kDegenerateWeights, "all-zero effective sample weights");

  ModelState model{Matrix(C, d + 1, 0.0), config};
  Matrix grad(C, d + 1);
  std::vector<double> p;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  const std::size_t batch = (config.batch_size == 0 || config.batch_size >= n) ? n : config.batch_size;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n) rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::fill(grad.data().begin(), grad.data().end(), 0.0);
      double batch_w = 0.0, batch_loss = 0.0;
      for (std::size_t t = start; t < stop; ++t) {
        const std::size_t j = order[t];
        if (w[j] == 0.0) continue;
        const auto x = data.features.row(j);
        softmax_into(model.theta, x, p);
        const auto y = static_cast<std::size_t>(data.labels[j]);
        batch_loss += w[j] * -std::log(std::max(p[y], 1e-300));
        batch_w += w[j];
        for (std::size_t c = 0; c < C; ++c) {
          const double r = w[j] * (p[c] - (c == y ? 1.0 : 0.0));
          auto g = grad.row(c);
          for (std::size_t k = 0; k < d; ++k) g[k] += r * x[k];
          g[d] += r;
        }
      }
      if (batch_w == 0.0) continue;
      if (!std::isfinite(batch_loss))
        throw Error(errc::kNumerical, "NaN loss at epoch " + std::to_string(epoch));
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k <= d; ++k) {
          double gk = grad(c, k) / batch_w;
          if (k < d) gk += config.l2 * model.theta(c, k);
          model.theta(c, k) -= config.learning_rate * gk;
        }
      }
    }
    for (double v : model.theta.data())
      if (!std::isfinite(v)) throw Error(errc::kNumerical, "NaN loss at epoch " + std::to_string(epoch));
  }
  return model;
}

ModelState train_model(const Dataset& ds, std::optional<std::span<const double>> sample_weights,
                       const TrainConfig& config) {
  const TrainingSet data = make_training_set(ds);
  return fit(data, sample_weights.value_or(std::span<const double>{}), config);
}

std::vector<double> predict_proba(const ModelState& model, std::span<const double> features) {
  std::vector<double> p;
  softmax_into(model.theta, features, p);
  return p;
}

int predict(const ModelState& model, std::span<const double> features) {
  const auto p = predict_proba(model, features);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> per_sample_gradient(const ModelState& model, std::span<const double> features,
                                        int label) {
  if (features.size() != model.feature_dim())
    throw Error(errc::kDimensionMismatch, "feature dimension does not match the model");
  check_finite(features);
  const std::size_t C = model.num_classes();
  const std::size_t d = model.feature_dim();
  std::vector<double> p;
  softmax_into(model.theta, features, p);
  std::vector<double> g(C * (d + 1));
  for (std::size_t c = 0; c < C; ++c) {
    const double r = p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0);
    for (std::size_t k = 0; k < d; ++k) g[c * (d + 1) + k] = r * features[k];
    g[c * (d + 1) + d] = r;
  }
  return g;
}

std::vector<double> per_sample_gradient(const ModelState& model, const Sample& sample) {
  return per_sample_gradient(model, sample.features, sample.observed_label);
}

Accuracy evaluate(const ModelState& model, const Dataset& ds, std::span<const SampleId> ids) {
  const auto C = static_cast<std::size_t>(ds.num_classes());
  std::vector<std::size_t> hits(C, 0), totals(C, 0);
  std::size_t hit = 0;
  for (SampleId id : ids) {
    const Sample& s = ds.at(id);
    const int truth = s.true_label.value_or(s.observed_label);
    const bool ok = predict(model, s.features) == truth;
    hit += ok;
    hits[static_cast<std::size_t>(truth)] += ok;
    ++totals[static_cast<std::size_t>(truth)];
  }
  Accuracy acc;
  acc.accuracy = ids.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(ids.size());
  acc.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    acc.per_class[c] = totals[c] ? static_cast<double>(hits[c]) / static_cast<double>(totals[c]) : 0.0;
  return acc;
}

}  // namespace rw
