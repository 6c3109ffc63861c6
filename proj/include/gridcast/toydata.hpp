#pragma once

// Synthetic gridded dynamical system standing in for a reanalysis archive:
// per-variable advection-diffusion on a sphere-like grid (periodic longitude,
// clamped latitude) with a chaotic local reaction coupling the variables and
// smooth seasonal + diurnal forcing. Plus dataset splits, normalization
// statistics, and batch sampling with dynamic intervals.

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct MiniAtmosConfig {
  std::int64_t n_lat = 32;
  std::int64_t n_lon = 64;
  std::int64_t n_vars = 6;
  std::int64_t n_surface_vars = 2;  // weighting analog: remaining vars are level-like

  std::vector<double> advect_lon;  // cells per time unit, per variable
  std::vector<double> advect_lat;
  std::vector<double> diffusion;   // cell^2 per time unit, per variable

  double coupling = 1.0;       // reaction strength (Lorenz-96 style)
  double reaction_forcing = 8.0;
  double seasonal_amp = 2.0;
  double diurnal_amp = 1.0;
  double seasonal_period_ticks = 400.0;
  double diurnal_period_ticks = 16.0;
  double oro_amp = 0.5;        // static orography contribution to the forcing

  double tick_dt = 0.05;       // time units per stored tick
  int substeps = 2;
  std::int64_t n_ticks = 6000;
  std::int64_t spinup_ticks = 200;

  double train_frac = 0.8;
  double val_frac = 0.1;
  std::uint64_t seed = 42;

  // optional initial-condition jitter (Lyapunov probes)
  double ic_perturb = 0.0;
  std::uint64_t ic_perturb_seed = 1;

  void validate() const;
  // fills per-variable vectors with defaults when left empty
  void apply_defaults();
};

struct SplitRange {
  std::int64_t begin = 0;  // inclusive
  std::int64_t end = 0;    // exclusive
  std::int64_t size() const { return end - begin; }
};

struct NormStats {
  std::vector<double> full_mean, full_std;            // per variable
  std::vector<std::int64_t> deltas;                   // tick intervals
  std::vector<std::vector<double>> res_mean, res_std; // [delta_index][variable]

  std::int64_t delta_index(std::int64_t delta) const;
};

class TrajectoryDataset {
 public:
  MiniAtmosConfig cfg;
  std::vector<float> states;  // [tick, var, lat, lon]
  std::vector<float> orography;  // [lat, lon]
  std::vector<float> land_mask;  // [lat, lon]
  SplitRange train, val, test;
  NormStats stats;

  std::int64_t n_ticks() const { return cfg.n_ticks; }
  std::int64_t field_numel() const { return cfg.n_vars * cfg.n_lat * cfg.n_lon; }

  Tensor<float> state_at(std::int64_t tick) const;

  // [3, lat, lon]: time-varying forcing field, orography, land mask. Valid
  // for any tick, including beyond the stored range (the clock is analytic).
  Tensor<float> forcings_at(double tick) const;

  // the additive forcing field the generator integrates
  double forcing_value(std::int64_t lat, std::int64_t lon, double tick) const;
};

// Raw integration; stats left empty (degenerate configs are legal here).
TrajectoryDataset simulate(const MiniAtmosConfig& cfg);

// simulate + training-split statistics over the standard delta set {1, 2, 4}.
TrajectoryDataset make_dataset(const MiniAtmosConfig& cfg);

// Training-split statistics: full-field per-variable mean/std and residual
// per-(variable, delta) mean/std.
NormStats compute_stats(const TrajectoryDataset& data, const std::vector<std::int64_t>& deltas);

// One sampled trajectory chunk. Physical-space fields; standardized views are
// produced by the forecast module's standardize helpers.
struct BatchElement {
  std::int64_t t_index = 0;
  Tensor<float> init_state;             // [V,H,W] at t_index
  std::vector<Tensor<float>> truth;     // K states at t_index + k*delta, k=1..K
  std::vector<Tensor<float>> forcings;  // K forcing stacks at t_index + (k-1)*delta
  Tensor<float> target_residual_std;    // standardized (x_{i+delta} - x_i), for K=1 pretraining
};

struct BatchDraw {
  std::int64_t delta = 1;
  std::int64_t delta_index = 0;
  std::vector<BatchElement> elements;
};

enum class Split { train, val, test };

// Uniform delta per batch; each element draws its own start index such that
// the K-step chain stays inside the chosen split.
BatchDraw sample_batch(const TrajectoryDataset& data, Rng& rng, std::int64_t k_steps,
                       std::int64_t batch_size, Split split = Split::train);

// Per-variable climatology over the training split: time-mean field and the
// mean spatial standard deviation (the long-rollout stability yardstick).
struct Climatology {
  std::vector<float> mean_field;     // [V,H,W]
  std::vector<double> spatial_std;   // per variable
};
Climatology compute_climatology(const TrajectoryDataset& data);

}  // namespace gridcast
