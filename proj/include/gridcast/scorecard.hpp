#pragma once

// Verification products: a scorecard of per-variable, per-lead metrics for a
// single forecast (the evaluate command), plus multi-initial averaged
// evaluation used by the end-to-end checks.

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/config.hpp"
#include "gridcast/container.hpp"
#include "gridcast/metrics.hpp"

namespace gridcast {

struct Scorecard {
  std::int64_t n_members = 0;
  std::int64_t delta = 1;
  std::int64_t init_time = 0;
  std::vector<std::int64_t> leads;  // 1-based step counts
  // [var][lead]
  std::vector<std::vector<double>> rmse, crps, ssr, ssr_uncorrected, spread;
  // zonal spectra at eval.spectra_lead (clamped to the last lead)
  std::int64_t spectra_lead = 0;
  std::vector<std::vector<double>> spectrum_model, spectrum_truth;
  // hovmoller anomalies [time][lon] for eval.hovmoller_var, member 0
  std::int64_t hovmoller_var = 0;
  std::vector<std::vector<double>> hovmoller_anomaly;

  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t nfe_total = 0;
  double wall_seconds = 0;
};

// Truth pulled from the dataset at the forecast's valid times.
TruthSeq truth_for(const EnsembleForecast& ens, const TrajectoryDataset& data);

Scorecard make_scorecard(const EnsembleForecast& ens, const TrajectoryDataset& data,
                         const RunConfig& cfg);

void write_scorecard_json(const std::string& path, const Scorecard& sc);
void write_scorecard_csv(const std::string& path, const Scorecard& sc);

struct CsvRow {
  std::int64_t variable = 0;
  std::int64_t lead = 0;
  std::string metric;
  double value = 0;
};
std::vector<CsvRow> read_metric_csv(const std::string& path);

// Persistence baseline: forecast the initial state at every lead.
std::vector<std::vector<double>> persistence_rmse(const TrajectoryDataset& data,
                                                  std::int64_t init_time, std::int64_t delta,
                                                  std::int64_t n_steps);

// ----------------------------------------------- multi-initial evaluation

struct EvalOptions {
  Split split = Split::test;
  std::int64_t n_initials = 8;
  std::int64_t n_members = 8;
  std::int64_t n_steps = 8;
  std::int64_t delta = 1;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  int n_threads = 2;
};

struct EvalResult {
  // [var][lead], averaged over initials
  std::vector<std::vector<double>> rmse, crps, ssr, spread;
  std::vector<std::vector<double>> persistence;  // persistence RMSE baseline
  // spectra averaged over initials and members at `spectra_lead` (1-based)
  std::vector<std::vector<double>> spectrum_model, spectrum_truth;
  std::int64_t spectra_lead = 0;
  std::int64_t nfe_total = 0;
  double sampler_wall_seconds = 0;
};

EvalResult evaluate_model(const RunConfig& cfg, const TrajectoryDataset& data,
                          const DenoiserParams<float>& params, const EvalOptions& opt);

}  // namespace gridcast
