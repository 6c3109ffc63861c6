#include "gridcast/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "gridcast/schedule.hpp"

namespace gridcast {
namespace {

using cplx = std::complex<double>;

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT. sign = -1 forward, +1 inverse (unscaled).
void fft(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double signed_wavenumber(std::int64_t k, std::int64_t n) {
  return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k - n);
}

struct Workspace {
  std::vector<double> u;  // [V,H,W] state in double precision
  std::vector<double> scratch;
  std::vector<cplx> row;
  std::vector<std::vector<cplx>> lon_factor;  // per-variable spectral factors
};

}  // namespace

void MiniAtmosConfig::apply_defaults() {
  auto fill = [&](std::vector<double>& v, double lo, double hi) {
    if (!v.empty()) return;
    v.resize(static_cast<std::size_t>(n_vars));
    for (std::int64_t i = 0; i < n_vars; ++i) {
      const double f = n_vars > 1 ? static_cast<double>(i) / static_cast<double>(n_vars - 1) : 0.0;
      v[static_cast<std::size_t>(i)] = lo + (hi - lo) * f;
    }
  };
  fill(advect_lon, 2.0, 6.0);  // eastward, cells per time unit
  fill(advect_lat, -0.5, 0.5);
  fill(diffusion, 0.2, 0.5);
}

void MiniAtmosConfig::validate() const {
  if (n_lat < 4 || n_lon < 4 || n_vars < 4)
    contract_error("mini-atmos: grid too small (need n_lat,n_lon >= 4, n_vars >= 4)");
  if (!is_pow2(n_lon)) contract_error("mini-atmos: n_lon must be a power of two");
  if (n_ticks < 16) contract_error("mini-atmos: n_ticks too small");
  if (tick_dt <= 0 || substeps < 1) contract_error("mini-atmos: bad time step");
  if (seasonal_period_ticks <= 0 || diurnal_period_ticks <= 0)
    contract_error("mini-atmos: periods must be positive");
  if (train_frac <= 0 || val_frac < 0 || train_frac + val_frac >= 1.0)
    contract_error("mini-atmos: bad split fractions");
  const double dt = tick_dt / substeps;
  for (double nu : diffusion) {
    if (nu < 0) contract_error("mini-atmos: diffusion must be >= 0");
    if (nu * dt > 0.25)
      contract_error(
          "mini-atmos: CFL violation on latitude diffusion; max usable value with this step is " +
          std::to_string(0.25 / dt));
  }
  for (double a : advect_lat)
    if (std::fabs(a) * dt > 0.5)
      contract_error("mini-atmos: CFL violation on latitude advection; max usable |speed| is " +
                     std::to_string(0.5 / dt));
}

double TrajectoryDataset::forcing_value(std::int64_t lat, std::int64_t lon, double tick) const {
  const double lat_rad =
      (-90.0 + (static_cast<double>(lat) + 0.5) * 180.0 / static_cast<double>(cfg.n_lat)) * kPi /
      180.0;
  const double lon_ang = 2.0 * kPi * static_cast<double>(lon) / static_cast<double>(cfg.n_lon);
  const double seasonal = cfg.seasonal_amp *
                          std::sin(2.0 * kPi * tick / cfg.seasonal_period_ticks) *
                          std::sin(lat_rad);
  const double diurnal =
      cfg.diurnal_amp * std::sin(2.0 * kPi * tick / cfg.diurnal_period_ticks + lon_ang);
  const double oro =
      cfg.oro_amp * static_cast<double>(orography[static_cast<std::size_t>(lat * cfg.n_lon + lon)]);
  return seasonal + diurnal + oro;
}

Tensor<float> TrajectoryDataset::state_at(std::int64_t tick) const {
  if (tick < 0 || tick >= cfg.n_ticks)
    contract_error("dataset: tick " + std::to_string(tick) + " out of range");
  Tensor<float> out = Tensor<float>::zeros({cfg.n_vars, cfg.n_lat, cfg.n_lon});
  std::copy_n(states.data() + tick * field_numel(), field_numel(), out.data());
  return out;
}

Tensor<float> TrajectoryDataset::forcings_at(double tick) const {
  Tensor<float> out = Tensor<float>::zeros({3, cfg.n_lat, cfg.n_lon});
  const std::int64_t hw = cfg.n_lat * cfg.n_lon;
  for (std::int64_t la = 0; la < cfg.n_lat; ++la)
    for (std::int64_t lo = 0; lo < cfg.n_lon; ++lo) {
      const std::int64_t c = la * cfg.n_lon + lo;
      out.data()[c] = static_cast<float>(forcing_value(la, lo, tick));
      out.data()[hw + c] = orography[static_cast<std::size_t>(c)];
      out.data()[2 * hw + c] = land_mask[static_cast<std::size_t>(c)];
    }
  return out;
}

TrajectoryDataset simulate(const MiniAtmosConfig& cfg_in) {
  MiniAtmosConfig cfg = cfg_in;
  cfg.apply_defaults();
  cfg.validate();

  TrajectoryDataset data;
  data.cfg = cfg;
  const std::int64_t V = cfg.n_vars, H = cfg.n_lat, W = cfg.n_lon;
  const std::int64_t hw = H * W;
  Rng rng(cfg.seed);

  // statics: smooth random orography from a few low harmonics; the land mask
  // thresholds it at its median
  {
    std::vector<double> oro(static_cast<std::size_t>(hw), 0.0);
    for (int h = 1; h <= 3; ++h) {
      const double alon = rng.uniform(-1, 1), blon = rng.uniform(-1, 1);
      const double alat = rng.uniform(-1, 1);
      const double phase = rng.uniform(0, 2 * kPi);
      for (std::int64_t la = 0; la < H; ++la)
        for (std::int64_t lo = 0; lo < W; ++lo) {
          const double x = 2.0 * kPi * lo / W, y = kPi * (la + 0.5) / H;
          oro[static_cast<std::size_t>(la * W + lo)] +=
              (alon * std::cos(h * x + phase) + blon * std::sin(h * x)) * std::sin(y) +
              alat * std::cos(h * y);
        }
    }
    std::vector<double> sorted = oro;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    data.orography.resize(static_cast<std::size_t>(hw));
    data.land_mask.resize(static_cast<std::size_t>(hw));
    for (std::int64_t c = 0; c < hw; ++c) {
      data.orography[static_cast<std::size_t>(c)] =
          static_cast<float>(oro[static_cast<std::size_t>(c)]);
      data.land_mask[static_cast<std::size_t>(c)] =
          oro[static_cast<std::size_t>(c)] > median ? 1.0f : 0.0f;
    }
  }

  Workspace ws;
  ws.u.resize(static_cast<std::size_t>(V * hw));
  for (auto& v : ws.u) v = cfg.reaction_forcing * 0.25 + rng.normal();
  if (cfg.ic_perturb != 0.0) {
    Rng prng(cfg.ic_perturb_seed);
    for (auto& v : ws.u) v += cfg.ic_perturb * prng.normal();
  }
  ws.scratch.assign(static_cast<std::size_t>(hw), 0.0);
  ws.row.resize(static_cast<std::size_t>(W));

  const double dt = cfg.tick_dt / cfg.substeps;

  ws.lon_factor.resize(static_cast<std::size_t>(V));
  for (std::int64_t v = 0; v < V; ++v) {
    auto& f = ws.lon_factor[static_cast<std::size_t>(v)];
    f.resize(static_cast<std::size_t>(W));
    for (std::int64_t k = 0; k < W; ++k) {
      const double kk = signed_wavenumber(k, W) * 2.0 * kPi / static_cast<double>(W);
      const double decay = -cfg.diffusion[static_cast<std::size_t>(v)] * kk * kk * dt;
      const double phase = -cfg.advect_lon[static_cast<std::size_t>(v)] * kk * dt;
      // the unpaired Nyquist bin of a real signal takes the symmetric real
      // part of the shift factor, keeping the substep a real-linear operator
      if (k == W / 2)
        f[static_cast<std::size_t>(k)] = cplx(std::exp(decay) * std::cos(phase), 0.0);
      else
        f[static_cast<std::size_t>(k)] = std::exp(decay) * cplx(std::cos(phase), std::sin(phase));
    }
  }

  auto lon_step = [&](std::int64_t v) {
    auto& f = ws.lon_factor[static_cast<std::size_t>(v)];
    for (std::int64_t la = 0; la < H; ++la) {
      double* rowp = ws.u.data() + (v * H + la) * W;
      for (std::int64_t lo = 0; lo < W; ++lo)
        ws.row[static_cast<std::size_t>(lo)] = cplx(rowp[lo], 0.0);
      fft(ws.row, -1);
      for (std::int64_t k = 0; k < W; ++k)
        ws.row[static_cast<std::size_t>(k)] *= f[static_cast<std::size_t>(k)];
      fft(ws.row, +1);
      for (std::int64_t lo = 0; lo < W; ++lo)
        rowp[lo] = ws.row[static_cast<std::size_t>(lo)].real() / static_cast<double>(W);
    }
  };

  auto lat_step = [&](std::int64_t v) {
    const double nu = cfg.diffusion[static_cast<std::size_t>(v)];
    const double a = cfg.advect_lat[static_cast<std::size_t>(v)];
    if (nu == 0.0 && a == 0.0) return;
    double* base = ws.u.data() + v * hw;
    for (std::int64_t la = 0; la < H; ++la) {
      for (std::int64_t lo = 0; lo < W; ++lo) {
        const double um = base[std::max<std::int64_t>(la - 1, 0) * W + lo];
        const double uc = base[la * W + lo];
        const double up = base[std::min<std::int64_t>(la + 1, H - 1) * W + lo];
        ws.scratch[static_cast<std::size_t>(la * W + lo)] =
            nu * (up - 2 * uc + um) - a * 0.5 * (up - um);
      }
    }
    for (std::int64_t c = 0; c < hw; ++c)
      base[c] += dt * ws.scratch[static_cast<std::size_t>(c)];
  };

  // Lorenz-96-style reaction across the variable index at each cell, driven
  // by the baseline forcing plus the smooth seasonal/diurnal field. Heun's
  // method keeps the chaotic part stable at the configured substep.
  std::vector<double> k1(static_cast<std::size_t>(V)), k2(static_cast<std::size_t>(V)),
      ustage(static_cast<std::size_t>(V)), ucell(static_cast<std::size_t>(V));
  auto reaction_step = [&](double t_ticks) {
    const double g = cfg.coupling;
    if (g == 0.0) return;
    for (std::int64_t la = 0; la < H; ++la)
      for (std::int64_t lo = 0; lo < W; ++lo) {
        const std::int64_t c = la * W + lo;
        const double force = cfg.reaction_forcing + data.forcing_value(la, lo, t_ticks);
        auto deriv = [&](const std::vector<double>& uv, std::vector<double>& out) {
          for (std::int64_t v = 0; v < V; ++v) {
            const double up1 = uv[static_cast<std::size_t>((v + 1) % V)];
            const double um1 = uv[static_cast<std::size_t>((v - 1 + V) % V)];
            const double um2 = uv[static_cast<std::size_t>((v - 2 + V) % V)];
            out[static_cast<std::size_t>(v)] =
                g * ((up1 - um2) * um1 - uv[static_cast<std::size_t>(v)] + force);
          }
        };
        for (std::int64_t v = 0; v < V; ++v)
          ucell[static_cast<std::size_t>(v)] = ws.u[static_cast<std::size_t>(v * hw + c)];
        deriv(ucell, k1);
        for (std::int64_t v = 0; v < V; ++v)
          ustage[static_cast<std::size_t>(v)] =
              ucell[static_cast<std::size_t>(v)] + dt * k1[static_cast<std::size_t>(v)];
        deriv(ustage, k2);
        for (std::int64_t v = 0; v < V; ++v)
          ws.u[static_cast<std::size_t>(v * hw + c)] =
              ucell[static_cast<std::size_t>(v)] +
              0.5 * dt * (k1[static_cast<std::size_t>(v)] + k2[static_cast<std::size_t>(v)]);
      }
  };

  data.states.resize(static_cast<std::size_t>(cfg.n_ticks * V * hw));
  for (std::int64_t tick = -cfg.spinup_ticks; tick < cfg.n_ticks; ++tick) {
    if (tick >= 0) {
      float* dst = data.states.data() + tick * V * hw;
      for (std::int64_t i = 0; i < V * hw; ++i)
        dst[i] = static_cast<float>(ws.u[static_cast<std::size_t>(i)]);
      if (tick == cfg.n_ticks - 1) break;
    }
    for (int s = 0; s < cfg.substeps; ++s) {
      const double t_ticks = static_cast<double>(tick) + static_cast<double>(s) / cfg.substeps;
      for (std::int64_t v = 0; v < V; ++v) {
        lon_step(v);
        lat_step(v);
      }
      reaction_step(t_ticks);
    }
    for (const double v : ws.u)
      if (!std::isfinite(v))
        contract_error("mini-atmos: integration blew up at tick " + std::to_string(tick));
  }

  const std::int64_t train_end = static_cast<std::int64_t>(cfg.n_ticks * cfg.train_frac);
  const std::int64_t val_end = train_end + static_cast<std::int64_t>(cfg.n_ticks * cfg.val_frac);
  data.train = {0, train_end};
  data.val = {train_end, val_end};
  data.test = {val_end, cfg.n_ticks};
  return data;
}

TrajectoryDataset make_dataset(const MiniAtmosConfig& cfg) {
  TrajectoryDataset data = simulate(cfg);
  data.stats = compute_stats(data, {1, 2, 4});
  return data;
}

std::int64_t NormStats::delta_index(std::int64_t delta) const {
  for (std::size_t i = 0; i < deltas.size(); ++i)
    if (deltas[i] == delta) return static_cast<std::int64_t>(i);
  contract_error("norm stats: no statistics for delta " + std::to_string(delta));
}

NormStats compute_stats(const TrajectoryDataset& data, const std::vector<std::int64_t>& deltas) {
  const auto& cfg = data.cfg;
  const std::int64_t V = cfg.n_vars, hw = cfg.n_lat * cfg.n_lon;
  const SplitRange tr = data.train;
  if (tr.size() <= 0) contract_error("stats: empty training split");

  NormStats st;
  st.deltas = deltas;
  st.full_mean.assign(static_cast<std::size_t>(V), 0.0);
  st.full_std.assign(static_cast<std::size_t>(V), 0.0);

  for (std::int64_t v = 0; v < V; ++v) {
    double m = 0, m2 = 0;
    std::int64_t n = 0;
    for (std::int64_t t = tr.begin; t < tr.end; ++t) {
      const float* f = data.states.data() + (t * V + v) * hw;
      for (std::int64_t c = 0; c < hw; ++c) {
        m += f[c];
        m2 += static_cast<double>(f[c]) * f[c];
        ++n;
      }
    }
    m /= static_cast<double>(n);
    const double var = m2 / static_cast<double>(n) - m * m;
    if (!(var > 1e-20))
      contract_error("stats: variable " + std::to_string(v) + " is degenerate (zero variance)");
    st.full_mean[static_cast<std::size_t>(v)] = m;
    st.full_std[static_cast<std::size_t>(v)] = std::sqrt(var);
  }

  for (const std::int64_t d : deltas) {
    if (d <= 0 || d >= tr.size())
      contract_error("stats: delta " + std::to_string(d) +
                     " not representable in the training split");
    std::vector<double> mean(static_cast<std::size_t>(V), 0.0),
        msq(static_cast<std::size_t>(V), 0.0);
    std::int64_t n = 0;
    for (std::int64_t t = tr.begin; t + d < tr.end; ++t) {
      for (std::int64_t v = 0; v < V; ++v) {
        const float* a = data.states.data() + (t * V + v) * hw;
        const float* b = data.states.data() + ((t + d) * V + v) * hw;
        double lm = 0, lq = 0;
        for (std::int64_t c = 0; c < hw; ++c) {
          const double r = static_cast<double>(b[c]) - a[c];
          lm += r;
          lq += r * r;
        }
        mean[static_cast<std::size_t>(v)] += lm;
        msq[static_cast<std::size_t>(v)] += lq;
      }
      ++n;
    }
    const double count = static_cast<double>(n) * static_cast<double>(hw);
    std::vector<double> rm(static_cast<std::size_t>(V)), rs(static_cast<std::size_t>(V));
    for (std::int64_t v = 0; v < V; ++v) {
      const double m = mean[static_cast<std::size_t>(v)] / count;
      const double var = msq[static_cast<std::size_t>(v)] / count - m * m;
      if (!(var > 1e-20))
        contract_error("stats: residuals of variable " + std::to_string(v) + " at delta " +
                       std::to_string(d) + " are degenerate (zero variance)");
      rm[static_cast<std::size_t>(v)] = m;
      rs[static_cast<std::size_t>(v)] = std::sqrt(var);
    }
    st.res_mean.push_back(std::move(rm));
    st.res_std.push_back(std::move(rs));
  }
  return st;
}

BatchDraw sample_batch(const TrajectoryDataset& data, Rng& rng, std::int64_t k_steps,
                       std::int64_t batch_size, Split split) {
  const SplitRange range = split == Split::train ? data.train
                           : split == Split::val ? data.val
                                                 : data.test;
  const auto& st = data.stats;
  BatchDraw out;
  out.delta_index = static_cast<std::int64_t>(rng.next_below(st.deltas.size()));
  out.delta = st.deltas[static_cast<std::size_t>(out.delta_index)];

  const std::int64_t span = k_steps * out.delta;
  const std::int64_t max_start = range.end - 1 - span;
  if (max_start < range.begin)
    contract_error("sample_batch: a " + std::to_string(k_steps) + "-step chain at delta " +
                   std::to_string(out.delta) + " does not fit in the split");

  const auto& cfg = data.cfg;
  const std::int64_t hw = cfg.n_lat * cfg.n_lon;
  for (std::int64_t b = 0; b < batch_size; ++b) {
    BatchElement el;
    el.t_index = range.begin + static_cast<std::int64_t>(rng.next_below(
                                   static_cast<std::uint64_t>(max_start - range.begin + 1)));
    el.init_state = data.state_at(el.t_index);
    for (std::int64_t k = 1; k <= k_steps; ++k) {
      el.truth.push_back(data.state_at(el.t_index + k * out.delta));
      el.forcings.push_back(
          data.forcings_at(static_cast<double>(el.t_index + (k - 1) * out.delta)));
    }
    el.target_residual_std = Tensor<float>::zeros({cfg.n_vars, cfg.n_lat, cfg.n_lon});
    const auto& first = el.truth.front();
    for (std::int64_t v = 0; v < cfg.n_vars; ++v) {
      const double m =
          st.res_mean[static_cast<std::size_t>(out.delta_index)][static_cast<std::size_t>(v)];
      const double s =
          st.res_std[static_cast<std::size_t>(out.delta_index)][static_cast<std::size_t>(v)];
      for (std::int64_t c = 0; c < hw; ++c) {
        const double r = static_cast<double>(first.data()[v * hw + c]) -
                         static_cast<double>(el.init_state.data()[v * hw + c]);
        el.target_residual_std.data()[v * hw + c] = static_cast<float>((r - m) / s);
      }
    }
    out.elements.push_back(std::move(el));
  }
  return out;
}

Climatology compute_climatology(const TrajectoryDataset& data) {
  const auto& cfg = data.cfg;
  const std::int64_t V = cfg.n_vars, hw = cfg.n_lat * cfg.n_lon;
  Climatology clim;
  clim.mean_field.assign(static_cast<std::size_t>(V * hw), 0.0f);
  clim.spatial_std.assign(static_cast<std::size_t>(V), 0.0);

  std::vector<double> acc(static_cast<std::size_t>(V * hw), 0.0);
  const SplitRange tr = data.train;
  for (std::int64_t t = tr.begin; t < tr.end; ++t) {
    const float* f = data.states.data() + t * V * hw;
    for (std::int64_t i = 0; i < V * hw; ++i) acc[static_cast<std::size_t>(i)] += f[i];
    for (std::int64_t v = 0; v < V; ++v) {
      const float* fv = f + v * hw;
      double m = 0, m2 = 0;
      for (std::int64_t c = 0; c < hw; ++c) {
        m += fv[c];
        m2 += static_cast<double>(fv[c]) * fv[c];
      }
      m /= static_cast<double>(hw);
      clim.spatial_std[static_cast<std::size_t>(v)] +=
          std::sqrt(std::max(0.0, m2 / static_cast<double>(hw) - m * m));
    }
  }
  const double nt = static_cast<double>(tr.size());
  for (std::int64_t i = 0; i < V * hw; ++i)
    clim.mean_field[static_cast<std::size_t>(i)] =
        static_cast<float>(acc[static_cast<std::size_t>(i)] / nt);
  for (auto& s : clim.spatial_std) s /= nt;
  return clim;
}

}  // namespace gridcast
