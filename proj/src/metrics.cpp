#include "gridcast/metrics.hpp"

#include <cmath>
#include <complex>
#include <limits>

#include "gridcast/crps.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/weights.hpp"

namespace gridcast {
namespace {

void check_truth(const EnsembleForecast& ens, const TruthSeq& truth) {
  if (static_cast<std::int64_t>(truth.size()) < ens.n_steps)
    contract_error("metrics: truth covers " + std::to_string(truth.size()) + " leads, forecast has " +
                   std::to_string(ens.n_steps));
  for (const auto& t : truth)
    if (t.shape != Shape{ens.n_vars, ens.n_lat, ens.n_lon})
      contract_error("metrics: truth shape " + shape_str(t.shape) + " does not match forecast");
}

}  // namespace

std::vector<double> metric_lat_weights(std::int64_t n_lat) {
  return cos_lat_weights(n_lat, 0.0);
}

std::vector<std::vector<double>> rmse_latweighted(const EnsembleForecast& ens,
                                                  const TruthSeq& truth) {
  check_truth(ens, truth);
  const std::vector<double> w = metric_lat_weights(ens.n_lat);
  const std::int64_t V = ens.n_vars, H = ens.n_lat, W = ens.n_lon;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(V),
                                       std::vector<double>(static_cast<std::size_t>(ens.n_steps)));
  std::vector<double> mean(static_cast<std::size_t>(H * W));
  for (std::int64_t k = 0; k < ens.n_steps; ++k) {
    for (std::int64_t v = 0; v < V; ++v) {
      std::fill(mean.begin(), mean.end(), 0.0);
      for (std::int64_t m = 0; m < ens.n_members; ++m) {
        const float* f = ens.at(m, k) + v * H * W;
        for (std::int64_t c = 0; c < H * W; ++c) mean[static_cast<std::size_t>(c)] += f[c];
      }
      const double inv_m = 1.0 / static_cast<double>(ens.n_members);
      const float* tr = truth[static_cast<std::size_t>(k)].data() + v * H * W;
      double acc = 0;
      for (std::int64_t la = 0; la < H; ++la) {
        double row = 0;
        for (std::int64_t lo = 0; lo < W; ++lo) {
          const double e = mean[static_cast<std::size_t>(la * W + lo)] * inv_m -
                           static_cast<double>(tr[la * W + lo]);
          row += e * e;
        }
        acc += w[static_cast<std::size_t>(la)] * row;
      }
      out[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
          std::sqrt(acc / static_cast<double>(H * W));
    }
  }
  return out;
}

std::vector<std::vector<double>> crps_score(const EnsembleForecast& ens, const TruthSeq& truth) {
  check_truth(ens, truth);
  if (ens.n_members < 2) contract_error("crps_score: fair CRPS undefined for singleton ensembles");
  const std::vector<double> w = metric_lat_weights(ens.n_lat);
  const std::int64_t V = ens.n_vars, H = ens.n_lat, W = ens.n_lon;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(V),
                                       std::vector<double>(static_cast<std::size_t>(ens.n_steps)));
  std::vector<float> members(static_cast<std::size_t>(ens.n_members));
  for (std::int64_t k = 0; k < ens.n_steps; ++k)
    for (std::int64_t v = 0; v < V; ++v) {
      double acc = 0;
      const float* tr = truth[static_cast<std::size_t>(k)].data() + v * H * W;
      for (std::int64_t la = 0; la < H; ++la) {
        double row = 0;
        for (std::int64_t lo = 0; lo < W; ++lo) {
          for (std::int64_t m = 0; m < ens.n_members; ++m)
            members[static_cast<std::size_t>(m)] = ens.at(m, k)[v * H * W + la * W + lo];
          row += fair_crps(std::span<const float>(members.data(), members.size()),
                           static_cast<double>(tr[la * W + lo]));
        }
        acc += w[static_cast<std::size_t>(la)] * row;
      }
      out[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
          acc / static_cast<double>(H * W);
    }
  return out;
}

SsrTable ssr(const EnsembleForecast& ens, const TruthSeq& truth) {
  check_truth(ens, truth);
  if (ens.n_members < 2) contract_error("ssr: need at least two members");
  const std::vector<double> w = metric_lat_weights(ens.n_lat);
  const std::int64_t V = ens.n_vars, H = ens.n_lat, W = ens.n_lon;
  const auto rmse = rmse_latweighted(ens, truth);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double correction =
      std::sqrt(static_cast<double>(ens.n_members + 1) / static_cast<double>(ens.n_members));

  SsrTable tab;
  auto init = [&](std::vector<std::vector<double>>& m) {
    m.assign(static_cast<std::size_t>(V),
             std::vector<double>(static_cast<std::size_t>(ens.n_steps), 0.0));
  };
  init(tab.corrected);
  init(tab.uncorrected);
  init(tab.spread);

  for (std::int64_t k = 0; k < ens.n_steps; ++k)
    for (std::int64_t v = 0; v < V; ++v) {
      double acc = 0;
      for (std::int64_t la = 0; la < H; ++la) {
        double row = 0;
        for (std::int64_t lo = 0; lo < W; ++lo) {
          double m = 0, m2 = 0;
          for (std::int64_t mm = 0; mm < ens.n_members; ++mm) {
            const double x = ens.at(mm, k)[v * H * W + la * W + lo];
            m += x;
            m2 += x * x;
          }
          m /= static_cast<double>(ens.n_members);
          // unbiased ensemble variance
          const double var = (m2 - static_cast<double>(ens.n_members) * m * m) /
                             static_cast<double>(ens.n_members - 1);
          row += std::max(0.0, var);
        }
        acc += w[static_cast<std::size_t>(la)] * row;
      }
      const double spread = std::sqrt(acc / static_cast<double>(H * W));
      const double skill = rmse[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)];
      tab.spread[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] = spread;
      if (skill > 0.0) {
        tab.uncorrected[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] = spread / skill;
        tab.corrected[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
            correction * spread / skill;
      } else {
        tab.uncorrected[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] = nan;
        tab.corrected[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] = nan;
      }
    }
  return tab;
}

std::vector<std::vector<double>> power_spectrum_field(const Tensor<float>& field) {
  if (field.rank() != 3) contract_error("power_spectrum: want [V,H,W]");
  const std::int64_t V = field.shape[0], H = field.shape[1], W = field.shape[2];
  if (W < 4) contract_error("power_spectrum: longitude extent must be >= 4");
  const std::vector<double> w = metric_lat_weights(H);
  const std::int64_t n_wave = W / 2 + 1;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(V),
                                       std::vector<double>(static_cast<std::size_t>(n_wave), 0.0));
  std::vector<double> re(static_cast<std::size_t>(W)), im(static_cast<std::size_t>(W));
  for (std::int64_t v = 0; v < V; ++v)
    for (std::int64_t la = 0; la < H; ++la) {
      const float* row = field.data() + (v * H + la) * W;
      for (std::int64_t k = 0; k < W; ++k) {
        double rr = 0, ii = 0;
        for (std::int64_t j = 0; j < W; ++j) {
          const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(j) /
                             static_cast<double>(W);
          rr += row[j] * std::cos(ang);
          ii += row[j] * std::sin(ang);
        }
        re[static_cast<std::size_t>(k)] = rr;
        im[static_cast<std::size_t>(k)] = ii;
      }
      const double wl = w[static_cast<std::size_t>(la)] / static_cast<double>(H);
      for (std::int64_t k = 0; k < W; ++k) {
        const double p =
            (re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
             im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)]) /
            static_cast<double>(W);
        const std::int64_t fold = k <= W / 2 ? k : W - k;
        out[static_cast<std::size_t>(v)][static_cast<std::size_t>(fold)] += wl * p;
      }
    }
  return out;
}

std::vector<std::vector<double>> power_spectrum(const EnsembleForecast& ens, std::int64_t lead) {
  if (lead < 0 || lead >= ens.n_steps) contract_error("power_spectrum: lead out of range");
  std::vector<std::vector<double>> acc;
  for (std::int64_t m = 0; m < ens.n_members; ++m) {
    auto p = power_spectrum_field(ens.state(m, lead));
    if (acc.empty()) {
      acc = std::move(p);
    } else {
      for (std::size_t v = 0; v < acc.size(); ++v)
        for (std::size_t k = 0; k < acc[v].size(); ++k) acc[v][k] += p[v][k];
    }
  }
  for (auto& row : acc)
    for (auto& x : row) x /= static_cast<double>(ens.n_members);
  return acc;
}

std::vector<std::vector<double>> hovmoller(const std::vector<Tensor<float>>& states,
                                           std::int64_t variable, std::int64_t lat_begin,
                                           std::int64_t lat_end, const Climatology& clim) {
  if (states.empty()) contract_error("hovmoller: no states");
  const Shape& s = states[0].shape;
  const std::int64_t V = s[0], H = s[1], W = s[2];
  if (lat_begin < 0 || lat_end > H || lat_begin >= lat_end)
    contract_error("hovmoller: empty or out-of-range latitude band");
  if (variable < 0 || variable >= V) contract_error("hovmoller: variable out of range");

  std::vector<std::vector<double>> out;
  const double inv_rows = 1.0 / static_cast<double>(lat_end - lat_begin);
  for (const auto& st : states) {
    std::vector<double> row(static_cast<std::size_t>(W), 0.0);
    for (std::int64_t la = lat_begin; la < lat_end; ++la)
      for (std::int64_t lo = 0; lo < W; ++lo) {
        const std::int64_t idx = (variable * H + la) * W + lo;
        row[static_cast<std::size_t>(lo)] +=
            (static_cast<double>(st.data()[idx]) -
             static_cast<double>(clim.mean_field[static_cast<std::size_t>(idx)])) *
            inv_rows;
      }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace gridcast
