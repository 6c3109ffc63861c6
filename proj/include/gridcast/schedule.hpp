#pragma once

// Trigonometric noise schedule: log-uniform noise prior, the tau -> t map,
// spherical interpolation between data and noise, and the unbiased drift
// estimate used by the continuous-time training objectives.

#include <cmath>

#include "gridcast/ops.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

inline constexpr double kPi = 3.14159265358979323846;

struct TrigFlowSchedule {
  double sigma_d = 1.0;
  double sigma_min = 0.02;
  double sigma_max = 200.0;

  void validate() const {
    if (!(sigma_d > 0.0)) contract_error("schedule: sigma_d must be > 0");
    if (!(sigma_min > 0.0 && sigma_min < sigma_max))
      contract_error("schedule: need 0 < sigma_min < sigma_max");
  }

  double t_max() const { return kPi / 2.0; }
  double t_min() const { return std::atan(sigma_min / sigma_d); }

  // tau uniform on [log sigma_min, log sigma_max]
  double tau_from_unit(double u) const {
    return (1.0 - u) * std::log(sigma_min) + u * std::log(sigma_max);
  }
  double sample_tau(Rng& rng) const { return tau_from_unit(rng.uniform()); }

  double time_from_tau(double tau) const { return std::atan(std::exp(tau) / sigma_d); }
  double tau_from_time(double t) const { return std::log(sigma_d * std::tan(t)); }

  double sample_time(Rng& rng) const { return time_from_tau(sample_tau(rng)); }

  // z ~ N(0, sigma_d^2 I)
  template <typename T>
  Tensor<T> noise_field(Shape shape, Rng& rng) const {
    return Tensor<T>::randn(std::move(shape), rng, static_cast<T>(sigma_d));
  }
};

// Scalar draw paired with its trig time, so hot loops do not recompute the
// arctangent.
struct NoiseDraw {
  double tau;
  double t;

  static NoiseDraw sample(const TrigFlowSchedule& s, Rng& rng) {
    NoiseDraw d;
    d.tau = s.sample_tau(rng);
    d.t = s.time_from_tau(d.tau);
    return d;
  }
};

// x_t = cos(t) x0 + sin(t) z
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x0, const Tensor<T>& z, double t) {
  if (x0.shape != z.shape)
    contract_error("interpolate: shapes " + shape_str(x0.shape) + " vs " + shape_str(z.shape));
  return add(scale(x0, static_cast<T>(std::cos(t))), scale(z, static_cast<T>(std::sin(t))));
}

// d x_t / d t along the interpolant: cos(t) z - sin(t) x0
template <typename T>
Tensor<T> drift_estimate(const Tensor<T>& x0, const Tensor<T>& z, double t) {
  if (x0.shape != z.shape)
    contract_error("drift_estimate: shapes " + shape_str(x0.shape) + " vs " + shape_str(z.shape));
  return sub(scale(z, static_cast<T>(std::cos(t))), scale(x0, static_cast<T>(std::sin(t))));
}

}  // namespace gridcast
