#pragma once

// Training objectives. The consistency parameterization
//   f(x_t, t) = cos(t) x_t - sin(t) sigma_d F(x_t / sigma_d, t)
// the diffusion velocity-matching loss, and the continuous-time consistency
// loss whose target uses the trajectory tangent
//   df/dt = -cos(t)(sigma_d F^- - dx/dt) - r sin(t)(x_t + sigma_d dF^-/dt)
// with dF^-/dt computed by forward-mode differentiation on the stop-gradient
// branch, a linear tangent warmup r, and RMS tangent normalization.

#include <cmath>
#include <functional>
#include <string>

#include "gridcast/dual.hpp"
#include "gridcast/network.hpp"
#include "gridcast/ops.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/weights.hpp"

namespace gridcast {

// A denoiser bound to its conditioning; the objectives only see this surface,
// so tests can substitute hard-wired or linear maps for the network.
template <typename T>
struct DenoiserFn {
  std::function<Tensor<T>(const Tensor<T>& x_over_sigma, double t)> eval;
  std::function<Dual<T>(const Dual<T>& x_over_sigma, const Dual<T>& t)> eval_dual;
};

// Bind network parameters (watched or plain) to fixed conditioning.
template <typename T>
DenoiserFn<T> denoiser_fn(const DenoiserParams<T>& params, const Tensor<T>& x_cond,
                          const Tensor<T>& forcings, std::int64_t delta_index) {
  DenoiserFn<T> fn;
  fn.eval = [params, x_cond, forcings, delta_index](const Tensor<T>& x, double t) {
    Tensor<T> cond = embed_condition(params, Tensor<T>::scalar(static_cast<T>(t)), delta_index);
    return denoiser_forward(params, x, x_cond, forcings, cond);
  };
  fn.eval_dual = [params, x_cond, forcings, delta_index](const Dual<T>& x, const Dual<T>& t) {
    Dual<T> cond = embed_condition(params, t, delta_index);
    return denoiser_forward(params, x, x_cond, forcings, cond);
  };
  return fn;
}

// f_theta(x_t, t) = cos(t) x_t - sin(t) sigma_d F(x_t / sigma_d, t)
template <typename T>
Tensor<T> f_consistency(const TrigFlowSchedule& s, const DenoiserFn<T>& fn, const Tensor<T>& x_t,
                        double t) {
  const T sd = static_cast<T>(s.sigma_d);
  Tensor<T> F = fn.eval(scale(x_t, T{1} / sd), t);
  return add(scale(x_t, static_cast<T>(std::cos(t))),
             scale(F, static_cast<T>(-std::sin(t)) * sd));
}

struct TangentWarmup {
  std::int64_t images_seen = 0;
  std::int64_t ramp_images = 1;

  double r() const {
    if (ramp_images <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(images_seen) / static_cast<double>(ramp_images));
  }
};

template <typename T>
struct LossResult {
  Tensor<T> loss;   // scalar, on the live tape
  Tensor<T> field;  // per-pixel squared-error field, detached
  double t = 0.0;   // noise time used for this sample
};

// ---------------------------------------------------------- diffusion loss

// Deterministic core at fixed (z, t): || sigma_d F - (cos t z - sin t x0) ||^2
template <typename T>
LossResult<T> diffusion_loss_at(const TrigFlowSchedule& s, const DenoiserFn<T>& fn,
                                const Tensor<T>& x0, const Tensor<T>& z, double t,
                                const LossWeights& w) {
  const T sd = static_cast<T>(s.sigma_d);
  Tensor<T> x_t = interpolate(x0, z, t);
  Tensor<T> velocity = drift_estimate(x0, z, t).detach();
  Tensor<T> pred = scale(fn.eval(scale(x_t.detach(), T{1} / sd), t), sd);
  Tensor<T> field = square(sub(pred, velocity));
  LossResult<T> out;
  out.loss = weighted_aggregate(field, w);
  out.field = field.detach();
  out.t = t;
  if (!std::isfinite(static_cast<double>(out.loss.item())))
    contract_error("diffusion loss: non-finite at t=" + std::to_string(t));
  return out;
}

template <typename T>
LossResult<T> diffusion_loss(const TrigFlowSchedule& s, const DenoiserFn<T>& fn,
                             const Tensor<T>& x0, Rng& rng, const LossWeights& w) {
  const NoiseDraw d = NoiseDraw::sample(s, rng);
  Tensor<T> z = s.noise_field<T>(x0.shape, rng);
  return diffusion_loss_at(s, fn, x0, z, d.t, w);
}

// -------------------------------------------------------- consistency loss

// Tangent of the consistency parameterization along the noising trajectory,
// evaluated on the stop-gradient branch. dF/dt comes from one dual pass with
// input tangent (dx_t/dt)/sigma_d and unit time tangent. Optionally returns
// the primal F^- from the same pass.
template <typename T>
Tensor<T> consistency_tangent(const TrigFlowSchedule& s, const DenoiserFn<T>& fn_detached,
                              const Tensor<T>& x_t, double t, const Tensor<T>& x0,
                              const Tensor<T>& z, double r, Tensor<T>* f_minus_out = nullptr) {
  if (!(r >= 0.0 && r <= 1.0)) contract_error("consistency_tangent: r out of [0,1]");
  const T sd = static_cast<T>(s.sigma_d);
  Tensor<T> dxdt = drift_estimate(x0, z, t).detach();

  Dual<T> xd(scale(x_t.detach(), T{1} / sd), scale(dxdt, T{1} / sd));
  Dual<T> td(Tensor<T>::scalar(static_cast<T>(t)), Tensor<T>::scalar(T{1}));
  Dual<T> Fd = fn_detached.eval_dual(xd, td);
  if (f_minus_out) *f_minus_out = Fd.v;

  Tensor<T> term1 = scale(sub(scale(Fd.v, sd), dxdt), static_cast<T>(-std::cos(t)));
  Tensor<T> term2 = scale(add(x_t.detach(), scale(Fd.t, sd)),
                          static_cast<T>(-r * std::sin(t)));
  Tensor<T> tangent = add(term1, term2);
  if (!tangent.all_finite())
    contract_error("consistency tangent: non-finite (r=" + std::to_string(r) +
                   ", t=" + std::to_string(t) + ")");
  return tangent;
}

// Deterministic core at fixed (z, t). fn_live runs on the recording tape;
// fn_detached must evaluate the same weights without tape participation.
template <typename T>
LossResult<T> consistency_loss_at(const TrigFlowSchedule& s, const DenoiserFn<T>& fn_live,
                                  const DenoiserFn<T>& fn_detached, const Tensor<T>& x0,
                                  const Tensor<T>& z, double t, const LossWeights& w, double r,
                                  double c_norm = 0.1) {
  const T sd = static_cast<T>(s.sigma_d);
  Tensor<T> x_t = interpolate(x0, z, t).detach();

  Tensor<T> f_minus;
  Tensor<T> tangent = consistency_tangent(s, fn_detached, x_t, t, x0, z, r, &f_minus);

  // target y = F^- + cos(t) df/dt, with the cos(t) df/dt product normalized
  // by its per-sample RMS; everything here is off-tape by construction
  Tensor<T> y_raw = scale(tangent, static_cast<T>(std::cos(t)));
  const double denom = static_cast<double>(rms(y_raw).item()) + c_norm;
  Tensor<T> target = add(f_minus, scale(y_raw, static_cast<T>(1.0 / denom)));

  Tensor<T> live = fn_live.eval(scale(x_t, T{1} / sd), t);
  Tensor<T> field = square(sub(live, target.detach()));
  LossResult<T> out;
  out.loss = weighted_aggregate(field, w);
  out.field = field.detach();
  out.t = t;
  if (!std::isfinite(static_cast<double>(out.loss.item())))
    contract_error("consistency loss: non-finite (r=" + std::to_string(r) +
                   ", t=" + std::to_string(t) + ")");
  return out;
}

template <typename T>
LossResult<T> consistency_loss(const TrigFlowSchedule& s, const DenoiserFn<T>& fn_live,
                               const DenoiserFn<T>& fn_detached, const Tensor<T>& x0, Rng& rng,
                               const LossWeights& w, const TangentWarmup& warmup,
                               double c_norm = 0.1) {
  const NoiseDraw d = NoiseDraw::sample(s, rng);
  Tensor<T> z = s.noise_field<T>(x0.shape, rng);
  return consistency_loss_at(s, fn_live, fn_detached, x0, z, d.t, w, warmup.r(), c_norm);
}

}  // namespace gridcast
