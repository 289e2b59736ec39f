#pragma once

#include <cstdint>
#include <vector>

#include "reweighter/matrix.hpp"

namespace rw {

struct TsneConfig {
  int iterations = 500;
  double learning_rate = 100.0;
  double exaggeration = 4.0;
  int exaggeration_iters = 100;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 250;
};

/// Exact 1-D t-SNE of the rows of `features`, rescaled to [0, 1]. The step
/// size is min(learning_rate, n / (2 * exaggeration)).
/// Perplexity is max(2, floor(sqrt(n))). The start layout is the first
/// principal component scaled to standard deviation 1e-4 (the seed only
/// picks the power-iteration start vector), so the result is deterministic.
/// n == 1 gives 0.5; n == 2 gives 0.25 / 0.75 in principal-component order.
std::vector<double> project_1d(const Matrix& features, std::uint64_t seed, const TsneConfig& config = {});

/// Projection of the centred rows onto the leading principal component.
std::vector<double> principal_component_scores(const Matrix& features, std::uint64_t seed);

}  // namespace rw
