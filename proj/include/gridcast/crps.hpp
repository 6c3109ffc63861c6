#pragma once

// Fair (self-comparison removed) CRPS estimator:
//   CRPS(y_hat^{1:N}, y) = (1/N) sum_n |y_hat^n - y|
//                        - 1/(2N(N-1)) sum_{n != n'} |y_hat^n - y_hat^n'|
// plus the closed-form Gaussian CRPS used as its unbiasedness oracle, and the
// weighted CRPS training loss over ensemble fields.

#include <cmath>
#include <span>
#include <vector>

#include "gridcast/ops.hpp"
#include "gridcast/tensor.hpp"
#include "gridcast/weights.hpp"

namespace gridcast {

template <typename T>
double fair_crps(std::span<const T> members, double obs) {
  const std::size_t n = members.size();
  if (n < 2) contract_error("fair_crps: fair CRPS undefined for singleton ensembles");
  double skill = 0.0;
  for (const T m : members) skill += std::fabs(static_cast<double>(m) - obs);
  skill /= static_cast<double>(n);
  double spread = 0.0;  // unordered pairs, counted twice by the n != n' sum
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      spread += std::fabs(static_cast<double>(members[i]) - static_cast<double>(members[j]));
  spread /= static_cast<double>(n) * static_cast<double>(n - 1);
  return skill - spread;
}

template <typename T>
double fair_crps(const std::vector<T>& members, double obs) {
  return fair_crps(std::span<const T>(members.data(), members.size()), obs);
}

// Closed-form CRPS of a Gaussian forecast N(mu, sigma^2) against obs.
inline double gaussian_crps(double mu, double sigma, double obs) {
  if (!(sigma > 0.0)) contract_error("gaussian_crps: sigma must be > 0");
  const double z = (obs - mu) / sigma;
  const double inv_sqrt2pi = 0.3989422804014326779399461;
  const double inv_sqrtpi = 0.5641895835477562869480795;
  const double pdf = inv_sqrt2pi * std::exp(-0.5 * z * z);
  const double cdf = 0.5 * std::erfc(-z / 1.4142135623730950488016887);
  return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - inv_sqrtpi);
}

// Per-pixel fair CRPS of N ensemble member fields against a target field.
// Differentiable; |.| uses subgradient 0 at exact ties.
template <typename T>
Tensor<T> crps_field(const std::vector<Tensor<T>>& members, const Tensor<T>& target) {
  const std::size_t n = members.size();
  if (n < 2) contract_error("crps_field: fair CRPS undefined for singleton ensembles");
  for (const auto& m : members)
    if (m.shape != target.shape)
      contract_error("crps_field: member shape " + shape_str(m.shape) + " vs target " +
                     shape_str(target.shape));
  Tensor<T> skill = abs(sub(members[0], target));
  for (std::size_t i = 1; i < n; ++i) skill = add(skill, abs(sub(members[i], target)));
  skill = scale(skill, T{1} / static_cast<T>(n));
  Tensor<T> spread;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Tensor<T> d = abs(sub(members[i], members[j]));
      spread = spread.defined() ? add(spread, d) : d;
    }
  spread = scale(spread, T{1} / (static_cast<T>(n) * static_cast<T>(n - 1)));
  return sub(skill, spread);
}

// Weighted CRPS objective over [V, H, W] fields.
template <typename T>
Tensor<T> crps_loss(const std::vector<Tensor<T>>& members, const Tensor<T>& target,
                    const LossWeights& weights) {
  return weighted_aggregate(crps_field(members, target), weights);
}

}  // namespace gridcast
