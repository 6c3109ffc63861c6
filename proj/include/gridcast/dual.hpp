#pragma once

// Forward-mode directional derivatives. A Dual carries (primal, tangent) and
// every primitive propagates both in one pass; composing the same ops used by
// the reverse path yields Jacobian-vector products without a tape. Dual math
// always runs off-tape (the consuming code detaches first), matching the
// stop-gradient semantics it exists to serve.

#include <vector>

#include "gridcast/ops.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

template <typename T>
struct Dual {
  Tensor<T> v;  // primal
  Tensor<T> t;  // tangent, same shape

  Dual() = default;
  Dual(Tensor<T> value, Tensor<T> tangent) : v(std::move(value)), t(std::move(tangent)) {
    if (v.shape != this->t.shape)
      contract_error("dual: primal " + shape_str(v.shape) + " and tangent " +
                     shape_str(this->t.shape) + " shapes differ");
  }

  static Dual constant(const Tensor<T>& value) { return Dual(value.detach(), zeros_like(value)); }
};

// ----------------------------------------------------------- arithmetic

template <typename T>
Dual<T> add(const Dual<T>& a, const Dual<T>& b) {
  return {add(a.v, b.v), add(a.t, b.t)};
}
template <typename T>
Dual<T> add(const Dual<T>& a, const Tensor<T>& b) {
  return {add(a.v, b), a.t};
}
template <typename T>
Dual<T> add(const Tensor<T>& a, const Dual<T>& b) {
  return {add(a, b.v), b.t};
}

template <typename T>
Dual<T> sub(const Dual<T>& a, const Dual<T>& b) {
  return {sub(a.v, b.v), sub(a.t, b.t)};
}
template <typename T>
Dual<T> sub(const Dual<T>& a, const Tensor<T>& b) {
  return {sub(a.v, b), a.t};
}
template <typename T>
Dual<T> sub(const Tensor<T>& a, const Dual<T>& b) {
  return {sub(a, b.v), neg(b.t)};
}

template <typename T>
Dual<T> mul(const Dual<T>& a, const Dual<T>& b) {
  return {mul(a.v, b.v), add(mul(a.t, b.v), mul(a.v, b.t))};
}
template <typename T>
Dual<T> mul(const Dual<T>& a, const Tensor<T>& b) {
  return {mul(a.v, b), mul(a.t, b)};
}
template <typename T>
Dual<T> mul(const Tensor<T>& a, const Dual<T>& b) {
  return mul(b, a);
}

template <typename T>
Dual<T> div(const Dual<T>& a, const Dual<T>& b) {
  Tensor<T> q = div(a.v, b.v);
  // (a/b)' = (a' - q b') / b
  return {q, div(sub(a.t, mul(q, b.t)), b.v)};
}
template <typename T>
Dual<T> div(const Dual<T>& a, const Tensor<T>& b) {
  return {div(a.v, b), div(a.t, b)};
}
template <typename T>
Dual<T> div(const Tensor<T>& a, const Dual<T>& b) {
  Tensor<T> q = div(a, b.v);
  return {q, neg(div(mul(q, b.t), b.v))};
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return add(a, b); }
template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return sub(a, b); }
template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) { return mul(a, b); }
template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) { return div(a, b); }

template <typename T>
Dual<T> neg(const Dual<T>& a) {
  return {neg(a.v), neg(a.t)};
}

template <typename T>
Dual<T> scale(const Dual<T>& a, T s) {
  return {scale(a.v, s), scale(a.t, s)};
}

template <typename T>
Dual<T> add_const(const Dual<T>& a, T s) {
  return {add_const(a.v, s), a.t};
}

// ------------------------------------------------------------ unary ops

template <typename T>
Dual<T> abs(const Dual<T>& a) {
  Tensor<T> s = Tensor<T>::zeros(a.v.shape);
  for (std::int64_t i = 0; i < a.v.numel(); ++i)
    s.data()[i] = a.v.data()[i] > T{0} ? T{1} : (a.v.data()[i] < T{0} ? T{-1} : T{0});
  return {abs(a.v), mul(s, a.t)};
}

template <typename T>
Dual<T> square(const Dual<T>& a) {
  return {square(a.v), scale(mul(a.v, a.t), T{2})};
}

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  Tensor<T> y = sqrt(a.v);
  return {y, div(a.t, scale(y, T{2}))};
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
  Tensor<T> y = exp(a.v);
  return {y, mul(a.t, y)};
}

template <typename T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), div(a.t, a.v)};
}

template <typename T>
Dual<T> sin(const Dual<T>& a) {
  return {sin(a.v), mul(a.t, cos(a.v))};
}

template <typename T>
Dual<T> cos(const Dual<T>& a) {
  return {cos(a.v), neg(mul(a.t, sin(a.v)))};
}

template <typename T>
Dual<T> tanh(const Dual<T>& a) {
  Tensor<T> y = tanh(a.v);
  return {y, mul(a.t, sub(Tensor<T>::full(y.shape, T{1}), square(y)))};
}

template <typename T>
Dual<T> sigmoid(const Dual<T>& a) {
  Tensor<T> y = sigmoid(a.v);
  Tensor<T> dy = mul(y, sub(Tensor<T>::full(y.shape, T{1}), y));
  return {y, mul(a.t, dy)};
}

template <typename T>
Dual<T> silu(const Dual<T>& a) {
  return mul(a, sigmoid(a));
}

template <typename T>
Dual<T> maximum(const Dual<T>& a, const Dual<T>& b) {
  Tensor<T> y = maximum(a.v, b.v);
  Tensor<T> tt = Tensor<T>::zeros(y.shape);
  const std::vector<T> av = detail::broadcast_to(a.v, y.shape);
  const std::vector<T> bv = detail::broadcast_to(b.v, y.shape);
  const std::vector<T> at = detail::broadcast_to(a.t, y.shape);
  const std::vector<T> bt = detail::broadcast_to(b.t, y.shape);
  for (std::size_t i = 0; i < at.size(); ++i) tt.data()[i] = av[i] >= bv[i] ? at[i] : bt[i];
  return {y, tt};
}

// ------------------------------------------------------------ reductions

template <typename T>
Dual<T> sum(const Dual<T>& a) {
  return {sum(a.v), sum(a.t)};
}
template <typename T>
Dual<T> mean(const Dual<T>& a) {
  return {mean(a.v), mean(a.t)};
}
template <typename T>
Dual<T> sum_axis(const Dual<T>& a, std::int64_t axis, bool keepdim = false) {
  return {sum_axis(a.v, axis, keepdim), sum_axis(a.t, axis, keepdim)};
}
template <typename T>
Dual<T> mean_axis(const Dual<T>& a, std::int64_t axis, bool keepdim = false) {
  return {mean_axis(a.v, axis, keepdim), mean_axis(a.t, axis, keepdim)};
}

// ------------------------------------------------------------- structure

template <typename T>
Dual<T> reshape(const Dual<T>& a, const Shape& s) {
  return {reshape(a.v, s), reshape(a.t, s)};
}
template <typename T>
Dual<T> transpose2d(const Dual<T>& a) {
  return {transpose2d(a.v), transpose2d(a.t)};
}
template <typename T>
Dual<T> slice(const Dual<T>& a, std::int64_t axis, std::int64_t start, std::int64_t len) {
  return {slice(a.v, axis, start, len), slice(a.t, axis, start, len)};
}
template <typename T>
Dual<T> interleave2(const Dual<T>& a, const Dual<T>& b) {
  return {interleave2(a.v, b.v), interleave2(a.t, b.t)};
}

template <typename T>
Dual<T> concat(const std::vector<Dual<T>>& xs, std::int64_t axis) {
  std::vector<Tensor<T>> vs, ts;
  for (const auto& x : xs) {
    vs.push_back(x.v);
    ts.push_back(x.t);
  }
  return {concat(vs, axis), concat(ts, axis)};
}

// --------------------------------------------------------------- linear

template <typename T>
Dual<T> matmul(const Tensor<T>& a, const Dual<T>& b) {
  return {matmul(a, b.v), matmul(a, b.t)};
}
template <typename T>
Dual<T> matmul(const Dual<T>& a, const Tensor<T>& b) {
  return {matmul(a.v, b), matmul(a.t, b)};
}
template <typename T>
Dual<T> matmul(const Dual<T>& a, const Dual<T>& b) {
  return {matmul(a.v, b.v), add(matmul(a.t, b.v), matmul(a.v, b.t))};
}

template <typename T>
Dual<T> conv_lon_circular(const Dual<T>& x, const Tensor<T>& w, std::int64_t center) {
  return {conv_lon_circular(x.v, w, center), conv_lon_circular(x.t, w, center)};
}
template <typename T>
Dual<T> conv_lat_clamped(const Dual<T>& x, const Tensor<T>& w, std::int64_t center) {
  return {conv_lat_clamped(x.v, w, center), conv_lat_clamped(x.t, w, center)};
}

template <typename T>
Dual<T> avg_pool2d(const Dual<T>& x, std::int64_t fh, std::int64_t fw) {
  return {avg_pool2d(x.v, fh, fw), avg_pool2d(x.t, fh, fw)};
}
template <typename T>
Dual<T> upsample_nearest(const Dual<T>& x, std::int64_t fh, std::int64_t fw) {
  return {upsample_nearest(x.v, fh, fw), upsample_nearest(x.t, fh, fw)};
}

// ------------------------------------------------------------ composites

template <typename T>
Dual<T> layer_norm_axis0(const Dual<T>& x, T eps = static_cast<T>(1e-5)) {
  Dual<T> mu = mean_axis(x, 0, true);
  Dual<T> xc = sub(x, mu);
  Dual<T> var = mean_axis(square(xc), 0, true);
  return div(xc, sqrt(add_const(var, eps)));
}

// One-pass Jacobian-vector product of a dual-composed function:
// returns (f(x), J_f(x) . v).
template <typename T, typename F>
std::pair<Tensor<T>, Tensor<T>> jvp(F&& f, const std::vector<Tensor<T>>& inputs,
                                    const std::vector<Tensor<T>>& tangents) {
  if (inputs.size() != tangents.size())
    contract_error("jvp: inputs and tangents count mismatch");
  std::vector<Dual<T>> duals;
  duals.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != tangents[i].shape)
      contract_error("jvp: tangent " + std::to_string(i) + " shape " +
                     shape_str(tangents[i].shape) + " does not match input " +
                     shape_str(inputs[i].shape));
    duals.emplace_back(inputs[i].detach(), tangents[i].detach());
  }
  Dual<T> out = f(duals);
  return {out.v, out.t};
}

}  // namespace gridcast
