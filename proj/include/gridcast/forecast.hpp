#pragma once

// Sampling and autoregressive rollout: single-step consistency sampling at
// t = pi/2, the multi-step PF-ODE baseline (Euler / midpoint on a uniform-t
// grid with a consistency-form closing jump), residual reconstruction with
// per-delta statistics, and independent-seed ensemble generation.

#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "gridcast/network.hpp"
#include "gridcast/objectives.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/tensor.hpp"
#include "gridcast/toydata.hpp"

namespace gridcast {

// --------------------------------------------------------- standardization

namespace detail {
template <typename T>
Tensor<T> per_var_const(const std::vector<double>& v) {
  Tensor<T> t = Tensor<T>::zeros({static_cast<std::int64_t>(v.size()), 1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) t.data()[i] = static_cast<T>(v[i]);
  return t;
}
}  // namespace detail

template <typename T>
Tensor<T> standardize_full(const Tensor<T>& x, const NormStats& st) {
  if (x.rank() != 3 || x.shape[0] != static_cast<std::int64_t>(st.full_mean.size()))
    contract_error("standardize: field " + shape_str(x.shape) + " does not match stats over " +
                   std::to_string(st.full_mean.size()) + " variables");
  return div(sub(x, detail::per_var_const<T>(st.full_mean)), detail::per_var_const<T>(st.full_std));
}

template <typename T>
Tensor<T> unstandardize_full(const Tensor<T>& x, const NormStats& st) {
  return add(mul(x, detail::per_var_const<T>(st.full_std)), detail::per_var_const<T>(st.full_mean));
}

template <typename T>
Tensor<T> standardize_residual(const Tensor<T>& r, const NormStats& st, std::int64_t delta_index) {
  const auto di = static_cast<std::size_t>(delta_index);
  if (di >= st.res_mean.size()) contract_error("standardize: no stats for this delta");
  return div(sub(r, detail::per_var_const<T>(st.res_mean[di])),
             detail::per_var_const<T>(st.res_std[di]));
}

template <typename T>
Tensor<T> unstandardize_residual(const Tensor<T>& r, const NormStats& st,
                                 std::int64_t delta_index) {
  const auto di = static_cast<std::size_t>(delta_index);
  if (di >= st.res_mean.size()) contract_error("unstandardize: no stats for this delta");
  return add(mul(r, detail::per_var_const<T>(st.res_std[di])),
             detail::per_var_const<T>(st.res_mean[di]));
}

// ------------------------------------------------------------------ samplers

struct NfeCounter {
  std::int64_t count = 0;
};

// Single consistency step from pure noise: -sigma_d F(z / sigma_d, pi/2).
// Exactly one network evaluation. Returns a standardized residual estimate.
template <typename T>
Tensor<T> sample_single_step(const TrigFlowSchedule& s, const DenoiserFn<T>& fn, Rng& rng,
                             const Shape& field_shape, NfeCounter* nfe = nullptr) {
  const T sd = static_cast<T>(s.sigma_d);
  Tensor<T> z = s.noise_field<T>(field_shape, rng);
  Tensor<T> F = fn.eval(scale(z, T{1} / sd), s.t_max());
  if (nfe) ++nfe->count;
  Tensor<T> out = scale(F, -sd);
  if (!out.detach().all_finite()) contract_error("single-step sampler: non-finite output");
  return out;
}

// Integrate dx/dt = sigma_d F(x/sigma_d, t) from t_max down to t_min on a
// uniform-t grid (order 1 = explicit Euler, order 2 = midpoint), then close
// to t = 0 with the consistency-form jump reusing the last evaluation.
// state_at_tmin, when given, receives the pre-jump integration endpoint (the
// convergence-order oracle compares it against the analytic ODE solution).
template <typename T>
Tensor<T> solve_pf_ode_states(const TrigFlowSchedule& s, const DenoiserFn<T>& fn, Rng& rng,
                              const Shape& field_shape, int n_steps, int order, NfeCounter* nfe,
                              Tensor<T>* state_at_tmin) {
  if (n_steps < 1) contract_error("pf-ode: n_steps must be >= 1");
  if (order != 1 && order != 2) contract_error("pf-ode: order must be 1 or 2");
  const T sd = static_cast<T>(s.sigma_d);
  const double t_max = s.t_max(), t_min = s.t_min();
  const double h = (t_min - t_max) / n_steps;

  Tensor<T> x = s.noise_field<T>(field_shape, rng);
  Tensor<T> last_f;
  for (int i = 0; i < n_steps; ++i) {
    const double t = t_max + i * h;
    Tensor<T> f1 = fn.eval(scale(x, T{1} / sd), t);
    if (nfe) ++nfe->count;
    if (order == 1) {
      x = add(x, scale(f1, static_cast<T>(h) * sd));
      last_f = f1;
    } else {
      Tensor<T> x_mid = add(x, scale(f1, static_cast<T>(h / 2) * sd));
      Tensor<T> f2 = fn.eval(scale(x_mid, T{1} / sd), t + h / 2);
      if (nfe) ++nfe->count;
      x = add(x, scale(f2, static_cast<T>(h) * sd));
      last_f = f2;
    }
    if (!x.detach().all_finite())
      contract_error("pf-ode: non-finite state at step " + std::to_string(i));
  }
  if (state_at_tmin) *state_at_tmin = x.detach();
  // consistency-form jump from t_min to 0, reusing the final evaluation
  return sub(scale(x, static_cast<T>(std::cos(t_min))),
             scale(last_f, static_cast<T>(std::sin(t_min)) * sd));
}

template <typename T>
Tensor<T> solve_pf_ode(const TrigFlowSchedule& s, const DenoiserFn<T>& fn, Rng& rng,
                       const Shape& field_shape, int n_steps, int order,
                       NfeCounter* nfe = nullptr) {
  return solve_pf_ode_states(s, fn, rng, field_shape, n_steps, order, nfe,
                             static_cast<Tensor<T>*>(nullptr));
}

struct SamplerConfig {
  enum class Kind { consistency_single_step, pf_ode };
  Kind kind = Kind::consistency_single_step;
  int ode_steps = 20;
  int ode_order = 2;
};

// ------------------------------------------------------------------- rollout

using ForcingsFn = std::function<Tensor<float>(std::int64_t tick)>;

struct Rollout {
  std::vector<Tensor<float>> states;  // K physical states after each step
  std::int64_t nfe = 0;
};

// Free-running autoregressive rollout: standardize the current state, sample
// a standardized residual, unstandardize it with the delta statistics, add,
// advance the clock by delta.
inline Rollout rollout(const TrigFlowSchedule& sched, const DenoiserParams<float>& params,
                       const NormStats& stats, const Tensor<float>& x_init,
                       const ForcingsFn& forcings_fn, std::int64_t t0, std::int64_t delta,
                       std::int64_t delta_index, std::int64_t n_steps,
                       const SamplerConfig& sampler, std::uint64_t seed) {
  Rollout out;
  Tensor<float> state = x_init.clone();
  std::int64_t tick = t0;
  NfeCounter nfe;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    Tensor<float> cond = standardize_full(state, stats);
    Tensor<float> forc = forcings_fn(tick);
    DenoiserFn<float> fn = denoiser_fn(params, cond, forc, delta_index);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
    Tensor<float> resid_std;
    if (sampler.kind == SamplerConfig::Kind::consistency_single_step) {
      resid_std = sample_single_step(sched, fn, rng, state.shape, &nfe);
    } else {
      resid_std = solve_pf_ode(sched, fn, rng, state.shape, sampler.ode_steps, sampler.ode_order,
                               &nfe);
    }
    state = add(state, unstandardize_residual(resid_std, stats, delta_index));
    if (!state.all_finite())
      contract_error("rollout: non-finite state after step " + std::to_string(k));
    tick += delta;
    out.states.push_back(state.clone());
  }
  out.nfe = nfe.count;
  return out;
}

// ------------------------------------------------------------------ ensemble

struct EnsembleForecast {
  std::int64_t n_members = 0;
  std::int64_t n_steps = 0;
  std::int64_t n_vars = 0, n_lat = 0, n_lon = 0;
  std::int64_t delta = 1;
  std::int64_t delta_index = 0;
  std::int64_t init_time = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> member_seeds;
  std::int64_t nfe_total = 0;
  std::vector<float> fields;  // [member, step, var, lat, lon]

  std::int64_t field_numel() const { return n_vars * n_lat * n_lon; }

  float* at(std::int64_t member, std::int64_t step) {
    return fields.data() + (member * n_steps + step) * field_numel();
  }
  const float* at(std::int64_t member, std::int64_t step) const {
    return fields.data() + (member * n_steps + step) * field_numel();
  }
  Tensor<float> state(std::int64_t member, std::int64_t step) const {
    Tensor<float> t = Tensor<float>::zeros({n_vars, n_lat, n_lon});
    std::copy_n(at(member, step), field_numel(), t.data());
    return t;
  }
};

// Independent-seed rollouts sharing the initial state and delta schedule.
// Members are exchangeable; each member's seed derives only from the base
// seed and the member index, so results do not depend on thread count.
inline EnsembleForecast ensemble_forecast(const TrigFlowSchedule& sched,
                                          const DenoiserParams<float>& params,
                                          const NormStats& stats, const Tensor<float>& x_init,
                                          const ForcingsFn& forcings_fn, std::int64_t t0,
                                          std::int64_t delta, std::int64_t delta_index,
                                          std::int64_t n_steps, const SamplerConfig& sampler,
                                          std::uint64_t base_seed, std::int64_t n_members,
                                          int n_threads = 1) {
  if (n_members < 1) contract_error("ensemble: need at least one member");
  EnsembleForecast ens;
  ens.n_members = n_members;
  ens.n_steps = n_steps;
  ens.n_vars = x_init.shape[0];
  ens.n_lat = x_init.shape[1];
  ens.n_lon = x_init.shape[2];
  ens.delta = delta;
  ens.delta_index = delta_index;
  ens.init_time = t0;
  ens.base_seed = base_seed;
  for (std::int64_t m = 0; m < n_members; ++m)
    ens.member_seeds.push_back(mix_seed(base_seed, static_cast<std::uint64_t>(m)));
  ens.fields.resize(static_cast<std::size_t>(n_members * n_steps * ens.field_numel()));

  std::vector<std::int64_t> nfe_per_member(static_cast<std::size_t>(n_members), 0);
  std::string first_error;
  auto run_member = [&](std::int64_t m) {
    try {
      Rollout r = rollout(sched, params, stats, x_init, forcings_fn, t0, delta, delta_index,
                          n_steps, sampler, ens.member_seeds[static_cast<std::size_t>(m)]);
      for (std::int64_t k = 0; k < n_steps; ++k)
        std::copy_n(r.states[static_cast<std::size_t>(k)].data(), ens.field_numel(),
                    ens.at(m, k));
      nfe_per_member[static_cast<std::size_t>(m)] = r.nfe;
    } catch (const std::exception& e) {
      if (first_error.empty())
        first_error = "member " + std::to_string(m) + ": " + e.what();
    }
  };

  if (n_threads <= 1 || n_members == 1) {
    for (std::int64_t m = 0; m < n_members; ++m) run_member(m);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t]() {
        for (std::int64_t m = t; m < n_members; m += n_threads) run_member(m);
      });
    for (auto& th : pool) th.join();
  }
  if (!first_error.empty()) contract_error("ensemble: " + first_error);
  for (auto n : nfe_per_member) ens.nfe_total += n;
  return ens;
}

}  // namespace gridcast
