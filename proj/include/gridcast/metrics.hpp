#pragma once

// Ensemble verification: latitude-weighted ensemble-mean RMSE, per-location
// fair CRPS, spread/skill ratio with the finite-ensemble correction, zonal
// power spectra, and Hovmoller extraction. All metrics run on physical-space
// fields and are invariant under member permutation.

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/forecast.hpp"
#include "gridcast/toydata.hpp"

namespace gridcast {

// Unclipped cos(latitude) weights normalized to mean 1 (verification never
// inherits the training clip).
std::vector<double> metric_lat_weights(std::int64_t n_lat);

// Ground truth per lead: truth[k] is the physical state at init + (k+1)*delta.
using TruthSeq = std::vector<Tensor<float>>;

// [var][lead]
std::vector<std::vector<double>> rmse_latweighted(const EnsembleForecast& ens,
                                                  const TruthSeq& truth);
std::vector<std::vector<double>> crps_score(const EnsembleForecast& ens, const TruthSeq& truth);

struct SsrTable {
  std::vector<std::vector<double>> corrected;    // sqrt((N+1)/N) * spread / skill
  std::vector<std::vector<double>> uncorrected;  // spread / skill
  std::vector<std::vector<double>> spread;       // lat-weighted RMS ensemble std
  // entries are NaN where the skill denominator vanishes
};
SsrTable ssr(const EnsembleForecast& ens, const TruthSeq& truth);

// Zonal power spectrum of one [V,H,W] field: per variable, latitude-weighted
// average over rows of |DFT along longitude|^2 / W, folded onto wavenumbers
// 0..W/2. Parseval: the sum over wavenumbers equals the weighted spatial sum
// of squares.
std::vector<std::vector<double>> power_spectrum_field(const Tensor<float>& field);

// Member- and initial-averaged spectrum of a forecast lead (0-based step).
std::vector<std::vector<double>> power_spectrum(const EnsembleForecast& ens, std::int64_t lead);

// Longitude-time section of a meridional band mean, as anomalies against the
// training climatology. states[t] are [V,H,W]; rows [lat_begin, lat_end).
// Output is [time][lon].
std::vector<std::vector<double>> hovmoller(const std::vector<Tensor<float>>& states,
                                           std::int64_t variable, std::int64_t lat_begin,
                                           std::int64_t lat_end, const Climatology& clim);

}  // namespace gridcast
