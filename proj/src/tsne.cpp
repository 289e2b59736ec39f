#include "reweighter/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reweighter/error.hpp"
#include "reweighter/rng.hpp"

namespace rw {

namespace {

// Sets row i of the conditional affinities so its entropy matches
// log(perplexity). `dist` is the squared-distance row. Sums run over the
// sorted distances so rows that are permutations of each other (duplicate
// points) get bitwise identical normalisers.
void conditional_row(const std::vector<double>& dist, std::size_t i, double perplexity,
                     std::vector<double>* out) {
  const std::size_t n = dist.size();
  std::vector<double> sorted;
  sorted.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) sorted.push_back(dist[j]);
  std::sort(sorted.begin(), sorted.end());
  const double dmin = sorted.front();
  const double target = std::log(perplexity);

  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    z = 0.0;
    double hsum = 0.0;
    for (double d : sorted) {
      const double e = std::exp(-beta * (d - dmin));
      z += e;
      hsum += beta * (d - dmin) * e;
    }
    const double entropy = std::log(z) + hsum / z;
    const double diff = entropy - target;
    if (std::abs(diff) < 1e-5) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  out->assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) (*out)[j] = std::exp(-beta * (dist[j] - dmin)) / z;
}

}  // namespace

std::vector<double> principal_component_scores(const Matrix& features, std::uint64_t seed) {
  const std::size_t n = features.rows(), d = features.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mean[k] += features(i, k);
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov(a, b) += (features(i, a) - mean[a]) * (features(i, b) - mean[b]);

  Rng rng(seed);
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> next(d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) next[a] += cov(a, b) * v[b];
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    for (std::size_t a = 0; a < d; ++a) v[a] = next[a] / norm;
  }
  // Fix the sign so the largest-magnitude loading is positive.
  std::size_t arg = 0;
  for (std::size_t a = 1; a < d; ++a)
    if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
  if (d > 0 && v[arg] < 0)
    for (double& x : v) x = -x;

  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) scores[i] += (features(i, k) - mean[k]) * v[k];
  return scores;
}

std::vector<double> project_1d(const Matrix& features, std::uint64_t seed, const TsneConfig& config) {
  const std::size_t n = features.rows();
  if (n == 0) throw Error(errc::kInvalidArgument, "cannot project an empty cluster");
  for (double v : features.data())
    if (!std::isfinite(v)) throw Error(errc::kNumerical, "non-finite feature value");
  if (n == 1) return {0.5};

  const std::vector<double> pc = principal_component_scores(features, seed);
  if (n == 2) {
    if (pc[0] == pc[1]) return {0.5, 0.5};
    return pc[0] < pc[1] ? std::vector<double>{0.25, 0.75} : std::vector<double>{0.75, 0.25};
  }

  const double perplexity = std::max(2.0, std::floor(std::sqrt(static_cast<double>(n))));
  Matrix P(n, n);
  {
    std::vector<double> dist(n), row;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < features.cols(); ++k) {
          const double diff = features(i, k) - features(j, k);
          s += diff * diff;
        }
        dist[j] = s;
      }
      conditional_row(dist, i, perplexity, &row);
      for (std::size_t j = 0; j < n; ++j) P(i, j) = row[j];
    }
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double p = std::max((P(i, j) + P(j, i)) / denom, 1e-12);
        P(i, j) = p;
        P(j, i) = p;
      }
  }

  std::vector<double> y(n);
  {
    double mean = 0.0, var = 0.0;
    for (double v : pc) mean += v;
    mean /= static_cast<double>(n);
    for (double v : pc) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) y[i] = sd > 0.0 ? (pc[i] - mean) / sd * 1e-4 : 0.0;
  }

  // The attraction row sums average 1 / n, so the explicit step is stable
  // only while eta * 4 * exaggeration / n < 2. Small clusters get a
  // proportionally smaller rate.
  const double eta = std::min(config.learning_rate,
                              static_cast<double>(n) / (2.0 * std::max(config.exaggeration, 1.0)));
  std::vector<double> update(n, 0.0), gains(n, 1.0), grad(n), num(n * n);
  for (int iter = 0; iter < config.iterations; ++iter) {
    const double exag = iter < config.exaggeration_iters ? config.exaggeration : 1.0;
    const double momentum = iter < config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;
    double zsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) {
          num[i * n + j] = 0.0;
          continue;
        }
        const double diff = y[i] - y[j];
        const double q = 1.0 / (1.0 + diff * diff);
        num[i * n + j] = q;
        zsum += q;
      }
    for (std::size_t i = 0; i < n; ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = num[i * n + j];
        g += (exag * P(i, j) - q / zsum) * q * (y[i] - y[j]);
      }
      grad[i] = 4.0 * g;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool same_sign = (grad[i] > 0) == (update[i] > 0);
      gains[i] = same_sign ? std::max(gains[i] * 0.8, 0.01) : gains[i] + 0.2;
      update[i] = momentum * update[i] - eta * gains[i] * grad[i];
      y[i] += update[i];
      mean += y[i];
    }
    mean /= static_cast<double>(n);
    for (double& v : y) v -= mean;
  }

  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  std::vector<double> x(n, 0.5);
  if (range > 0.0 && std::isfinite(range))
    for (std::size_t i = 0; i < n; ++i) x[i] = (y[i] - *lo) / range;
  return x;
}

}  // namespace rw
