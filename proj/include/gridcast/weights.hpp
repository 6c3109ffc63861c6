#pragma once

// Per-variable and per-latitude-row loss weighting. Latitude weights follow
// cos(latitude) with a floor applied before normalizing the spatial mean to 1,
// so an all-ones loss field with unit variable weights aggregates to exactly 1.

#include <cmath>
#include <vector>

#include "gridcast/ops.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct LossWeights {
  std::vector<double> kappa;  // per variable, > 0
  std::vector<double> alpha;  // per latitude row, mean exactly 1 after construction

  void validate() const {
    for (double k : kappa)
      if (!(k > 0.0)) contract_error("loss weights: kappa must be > 0");
    for (double a : alpha)
      if (!(a > 0.0)) contract_error("loss weights: alpha must be > 0");
  }
};

// Latitude row centers in radians for an n_lat-row grid spanning pole to pole.
inline std::vector<double> latitude_centers(std::int64_t n_lat) {
  std::vector<double> lat(static_cast<std::size_t>(n_lat));
  for (std::int64_t j = 0; j < n_lat; ++j)
    lat[j] = (-90.0 + (static_cast<double>(j) + 0.5) * 180.0 / static_cast<double>(n_lat)) *
             kPi / 180.0;
  return lat;
}

// cos(latitude) weights, optionally clipped below, normalized to mean 1.
inline std::vector<double> cos_lat_weights(std::int64_t n_lat, double clip_floor) {
  std::vector<double> w = latitude_centers(n_lat);
  double mean = 0.0;
  for (auto& v : w) {
    v = std::max(std::cos(v), clip_floor);
    mean += v;
  }
  mean /= static_cast<double>(n_lat);
  for (auto& v : w) v /= mean;
  return w;
}

inline LossWeights make_loss_weights(std::int64_t n_vars, std::int64_t n_surface_vars,
                                     std::int64_t n_lat, double alpha_clip_floor,
                                     double kappa_level_floor) {
  LossWeights lw;
  lw.alpha = cos_lat_weights(n_lat, alpha_clip_floor);
  lw.kappa.resize(static_cast<std::size_t>(n_vars));
  const std::int64_t n_level = n_vars - n_surface_vars;
  for (std::int64_t v = 0; v < n_vars; ++v) {
    if (v < n_surface_vars) {
      lw.kappa[v] = 1.0;
    } else {
      // level-analog variables weighted by a normalized pressure-analog
      // coordinate increasing toward the surface
      const double p = static_cast<double>(v - n_surface_vars + 1) / static_cast<double>(n_level);
      lw.kappa[v] = std::max(kappa_level_floor, p);
    }
  }
  return lw;
}

// kappa(v) * alpha(s) weighted mean over all (variable, lat, lon) cells of a
// [V, H, W] loss field.
template <typename T>
Tensor<T> weighted_aggregate(const Tensor<T>& loss_field, const LossWeights& w) {
  if (loss_field.rank() != 3)
    contract_error("weighted_aggregate: want [var, lat, lon], got " + shape_str(loss_field.shape));
  const std::int64_t V = loss_field.shape[0], H = loss_field.shape[1];
  if (static_cast<std::int64_t>(w.kappa.size()) != V)
    contract_error("weighted_aggregate: kappa covers " + std::to_string(w.kappa.size()) +
                   " variables, field has " + std::to_string(V));
  if (static_cast<std::int64_t>(w.alpha.size()) != H)
    contract_error("weighted_aggregate: alpha covers " + std::to_string(w.alpha.size()) +
                   " rows, field has " + std::to_string(H));
  Tensor<T> kv = Tensor<T>::zeros({V, 1, 1});
  for (std::int64_t v = 0; v < V; ++v) kv.data()[v] = static_cast<T>(w.kappa[v]);
  Tensor<T> ah = Tensor<T>::zeros({1, H, 1});
  for (std::int64_t h = 0; h < H; ++h) ah.data()[h] = static_cast<T>(w.alpha[h]);
  return mean(mul(mul(loss_field, kv), ah));
}

}  // namespace gridcast
