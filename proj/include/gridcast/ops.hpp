#pragma once

// Primitive tensor operations. Every op computes through the kernel table,
// validates shapes, and registers a reverse rule when any input participates
// in a recording tape. Forward-mode (dual) rules live in dual.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/kernels.hpp"
#include "gridcast/tape.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {
namespace detail {

// ------------------------------------------------------------ broadcasting

// Right-aligned broadcasting: shapes are padded on the left with 1s; each
// dimension must match or be 1. This is the only implicit shape coercion in
// the engine.
struct BcastDims {
  Shape out;
  std::vector<std::int64_t> stride_a, stride_b;  // element strides, 0 on broadcast dims
};

inline BcastDims broadcast_dims(const char* op, const Shape& a, const Shape& b) {
  const std::size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  BcastDims bd;
  bd.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    const std::int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      contract_error(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                     " do not broadcast");
    bd.out[i] = std::max(da, db);
  }
  auto strides_for = [&](const Shape& s) {
    std::vector<std::int64_t> st(r, 0);
    std::int64_t acc = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::size_t d = s.size() - 1 - i;
      const std::size_t o = r - 1 - i;
      st[o] = (s[d] == 1) ? 0 : acc;
      acc *= s[d];
    }
    return st;
  };
  bd.stride_a = strides_for(a);
  bd.stride_b = strides_for(b);
  return bd;
}

enum class BinKind { add, sub, mul, div, max };

template <typename T>
void binary_rows(BinKind kind, const T* a, std::int64_t sa, const T* b, std::int64_t sb, T* c,
                 std::int64_t n) {
  const auto& k = kernels::table<T>();
  if (sa == 1 && sb == 1) {
    switch (kind) {
      case BinKind::add: k.add(a, b, c, n); return;
      case BinKind::sub: k.sub(a, b, c, n); return;
      case BinKind::mul: k.mul(a, b, c, n); return;
      case BinKind::div: k.div(a, b, c, n); return;
      case BinKind::max: k.max(a, b, c, n); return;
    }
  }
  if (sa == 1 && sb == 0) {
    const T s = b[0];
    switch (kind) {
      case BinKind::add: k.add_scalar(a, s, c, n); return;
      case BinKind::sub: k.add_scalar(a, -s, c, n); return;
      case BinKind::mul: k.scale(a, s, c, n); return;
      case BinKind::div:
        for (std::int64_t i = 0; i < n; ++i) c[i] = a[i] / s;
        return;
      case BinKind::max:
        for (std::int64_t i = 0; i < n; ++i) c[i] = a[i] > s ? a[i] : s;
        return;
    }
  }
  // scalar a over vector b (or scalar/scalar with n == 1)
  const std::int64_t ia = sa, ib = sb;
  for (std::int64_t i = 0; i < n; ++i) {
    const T x = a[i * ia], y = b[i * ib];
    switch (kind) {
      case BinKind::add: c[i] = x + y; break;
      case BinKind::sub: c[i] = x - y; break;
      case BinKind::mul: c[i] = x * y; break;
      case BinKind::div: c[i] = x / y; break;
      case BinKind::max: c[i] = x > y ? x : y; break;
    }
  }
}

template <typename T>
void binary_apply(BinKind kind, const BcastDims& bd, const T* a, const T* b, T* c) {
  const std::size_t r = bd.out.size();
  if (r == 0) {  // rank-0 op
    binary_rows(kind, a, 0, b, 0, c, 1);
    return;
  }
  const std::int64_t inner = bd.out[r - 1];
  const std::int64_t sa_in = bd.stride_a[r - 1], sb_in = bd.stride_b[r - 1];
  std::int64_t rows = 1;
  for (std::size_t i = 0; i + 1 < r; ++i) rows *= bd.out[i];
  std::vector<std::int64_t> coord(r > 0 ? r - 1 : 0, 0);
  std::int64_t off_a = 0, off_b = 0, off_c = 0;
  for (std::int64_t row = 0; row < rows; ++row) {
    binary_rows(kind, a + off_a, sa_in, b + off_b, sb_in, c + off_c, inner);
    off_c += inner;
    // increment mixed-radix counter over leading dims
    for (std::int64_t d = static_cast<std::int64_t>(coord.size()) - 1; d >= 0; --d) {
      off_a += bd.stride_a[d];
      off_b += bd.stride_b[d];
      if (++coord[d] < bd.out[d]) break;
      off_a -= bd.stride_a[d] * bd.out[d];
      off_b -= bd.stride_b[d] * bd.out[d];
      coord[d] = 0;
    }
  }
}

// Materialize x broadcast to `out` (used by a few backward rules).
template <typename T>
std::vector<T> broadcast_to(const Tensor<T>& x, const Shape& out) {
  std::vector<T> r(static_cast<std::size_t>(shape_numel(out)));
  BcastDims bd = broadcast_dims("broadcast_to", x.shape, out);
  const T one{1};
  binary_apply(BinKind::mul, BcastDims{out, bd.stride_a, std::vector<std::int64_t>(out.size(), 0)},
               x.data(), &one, r.data());
  return r;
}

// Sum g (shaped `from`) down to `to_shape` (right-aligned, dims equal or 1).
template <typename T>
std::vector<T> reduce_to(const std::vector<T>& g, const Shape& from, const Shape& to_shape) {
  if (from == to_shape) return g;
  const auto& k = kernels::table<T>();
  const std::size_t r = from.size();
  const std::size_t rt = to_shape.size();
  std::vector<std::int64_t> tdims(r, 1);
  for (std::size_t i = 0; i < rt; ++i) tdims[r - rt + i] = to_shape[i];
  // target strides, 0 where reduced
  std::vector<std::int64_t> tstride(r, 0);
  std::int64_t acc = 1;
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t d = r - 1 - i;
    tstride[d] = (tdims[d] == 1) ? 0 : acc;
    acc *= tdims[d];
  }
  std::vector<T> out(static_cast<std::size_t>(shape_numel(to_shape)), T{0});
  const std::int64_t inner = r > 0 ? from[r - 1] : 1;
  const bool inner_kept = r > 0 && tstride[r - 1] != 0;
  std::int64_t rows = 1;
  for (std::size_t i = 0; i + 1 < r; ++i) rows *= from[i];
  std::vector<std::int64_t> coord(r > 0 ? r - 1 : 0, 0);
  std::int64_t off_t = 0, off_g = 0;
  for (std::int64_t row = 0; row < rows; ++row) {
    if (inner_kept) {
      k.add(out.data() + off_t, g.data() + off_g, out.data() + off_t, inner);
    } else {
      out[off_t] += k.sum(g.data() + off_g, inner);
    }
    off_g += inner;
    for (std::int64_t d = static_cast<std::int64_t>(coord.size()) - 1; d >= 0; --d) {
      off_t += tstride[d];
      if (++coord[d] < from[d]) break;
      off_t -= tstride[d] * from[d];
      coord[d] = 0;
    }
  }
  return out;
}

template <typename T>
void accum_reduced(Tape<T>& t, std::int32_t node, const std::vector<T>& g, const Shape& gshape,
                   const Shape& target) {
  if (node < 0) return;
  if (gshape == target) {
    t.grad_accum(node, g.data(), g.size());
  } else {
    std::vector<T> r = reduce_to(g, gshape, target);
    t.grad_accum(node, r.data(), r.size());
  }
}

template <typename T>
void maybe_check(const Tensor<T>& out, const char* op) {
  if (debug_checks() && !out.all_finite())
    contract_error(std::string(op) + ": non-finite output");
}

}  // namespace detail

// ----------------------------------------------------------- binary ops

template <typename T>
Tensor<T> binary_op(const char* name, detail::BinKind kind, const Tensor<T>& a,
                    const Tensor<T>& b) {
  detail::BcastDims bd = detail::broadcast_dims(name, a.shape, b.shape);
  Tensor<T> out = Tensor<T>::zeros(bd.out);
  detail::binary_apply(kind, bd, a.data(), b.data(), out.data());
  detail::maybe_check(out, name);
  Tape<T>* tp = detail::common_tape<T>(name, {&a, &b});
  if (!tp) return out;
  const auto an = a.node, bn = b.node;
  const Shape ashape = a.shape, bshape = b.shape, oshape = bd.out;
  const Tensor<T> av = a.detach(), bv = b.detach();
  typename Tape<T>::BackFn fn;
  switch (kind) {
    case detail::BinKind::add:
      fn = [=](Tape<T>& t, const std::vector<T>& g) {
        detail::accum_reduced(t, an, g, oshape, ashape);
        detail::accum_reduced(t, bn, g, oshape, bshape);
      };
      break;
    case detail::BinKind::sub:
      fn = [=](Tape<T>& t, const std::vector<T>& g) {
        detail::accum_reduced(t, an, g, oshape, ashape);
        if (bn >= 0) {
          std::vector<T> ng(g.size());
          kernels::table<T>().neg(g.data(), ng.data(), g.size());
          detail::accum_reduced(t, bn, ng, oshape, bshape);
        }
      };
      break;
    case detail::BinKind::mul:
      fn = [=](Tape<T>& t, const std::vector<T>& g) {
        if (an >= 0) {
          std::vector<T> bb = detail::broadcast_to(bv, oshape);
          kernels::table<T>().mul(g.data(), bb.data(), bb.data(), g.size());
          detail::accum_reduced(t, an, bb, oshape, ashape);
        }
        if (bn >= 0) {
          std::vector<T> aa = detail::broadcast_to(av, oshape);
          kernels::table<T>().mul(g.data(), aa.data(), aa.data(), g.size());
          detail::accum_reduced(t, bn, aa, oshape, bshape);
        }
      };
      break;
    case detail::BinKind::div:
      fn = [=](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T> bb = detail::broadcast_to(bv, oshape);
        if (an >= 0) {
          std::vector<T> da(g.size());
          kernels::table<T>().div(g.data(), bb.data(), da.data(), g.size());
          detail::accum_reduced(t, an, da, oshape, ashape);
        }
        if (bn >= 0) {
          std::vector<T> aa = detail::broadcast_to(av, oshape);
          // db = -g * a / b^2
          kernels::table<T>().mul(g.data(), aa.data(), aa.data(), g.size());
          kernels::table<T>().div(aa.data(), bb.data(), aa.data(), g.size());
          kernels::table<T>().div(aa.data(), bb.data(), aa.data(), g.size());
          kernels::table<T>().neg(aa.data(), aa.data(), g.size());
          detail::accum_reduced(t, bn, aa, oshape, bshape);
        }
      };
      break;
    case detail::BinKind::max:
      fn = [=](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T> aa = detail::broadcast_to(av, oshape);
        std::vector<T> bb = detail::broadcast_to(bv, oshape);
        // ties route the gradient to the first operand
        if (an >= 0) {
          std::vector<T> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) da[i] = aa[i] >= bb[i] ? g[i] : T{0};
          detail::accum_reduced(t, an, da, oshape, ashape);
        }
        if (bn >= 0) {
          std::vector<T> db(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) db[i] = aa[i] < bb[i] ? g[i] : T{0};
          detail::accum_reduced(t, bn, db, oshape, bshape);
        }
      };
      break;
  }
  out.tape = tp;
  out.node = tp->record({an, bn}, out.shape, std::move(fn));
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op("add", detail::BinKind::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op("sub", detail::BinKind::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op("mul", detail::BinKind::mul, a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op("div", detail::BinKind::div, a, b);
}
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op("maximum", detail::BinKind::max, a, b);
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

// ------------------------------------------------------ scalar constants

// c = s * x with s a plain (non-differentiated) constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  kernels::table<T>().scale(x.data(), s, out.data(), x.numel());
  detail::maybe_check(out, "scale");
  if (Tape<T>* tp = detail::common_tape<T>("scale", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn, s](Tape<T>& t, const std::vector<T>& g) {
      std::vector<T> gx(g.size());
      kernels::table<T>().scale(g.data(), s, gx.data(), g.size());
      t.grad_accum(xn, gx.data(), gx.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& x, T s) {
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  kernels::table<T>().add_scalar(x.data(), s, out.data(), x.numel());
  detail::maybe_check(out, "add_const");
  if (Tape<T>* tp = detail::common_tape<T>("add_const", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn](Tape<T>& t, const std::vector<T>& g) {
      t.grad_accum(xn, g.data(), g.size());
    });
  }
  return out;
}

// ------------------------------------------------------------- unary ops

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  // fwd(in, out, n); bwd(gin_out, g, x, y, n) fills the input gradient
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  fwd(x.data(), out.data(), static_cast<std::size_t>(x.numel()));
  maybe_check(out, name);
  if (Tape<T>* tp = common_tape<T>(name, {&x})) {
    const auto xn = x.node;
    const Tensor<T> xv = x.detach(), yv = out.detach();
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn, xv, yv, bwd](Tape<T>& t, const std::vector<T>& g) {
      std::vector<T> gx(g.size());
      bwd(gx.data(), g.data(), xv.data(), yv.data(), g.size());
      t.grad_accum(xn, gx.data(), gx.size());
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary_op(
      "neg", x, [](const T* a, T* c, std::size_t n) { kernels::table<T>().neg(a, c, n); },
      [](T* gx, const T* g, const T*, const T*, std::size_t n) {
        kernels::table<T>().neg(g, gx, n);
      });
}

template <typename T>
Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary_op(
      "abs", x, [](const T* a, T* c, std::size_t n) { kernels::table<T>().abs(a, c, n); },
      [](T* gx, const T* g, const T* xv, const T*, std::size_t n) {
        // subgradient 0 at exact ties
        for (std::size_t i = 0; i < n; ++i)
          gx[i] = xv[i] > T{0} ? g[i] : (xv[i] < T{0} ? -g[i] : T{0});
      });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary_op(
      "square", x, [](const T* a, T* c, std::size_t n) { kernels::table<T>().square(a, c, n); },
      [](T* gx, const T* g, const T* xv, const T*, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = T{2} * xv[i] * g[i];
      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op(
      "sqrt", x, [](const T* a, T* c, std::size_t n) { kernels::table<T>().sqrt(a, c, n); },
      [](T* gx, const T* g, const T*, const T* yv, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] / (T{2} * yv[i]);
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      "exp", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = std::exp(a[i]);
      },
      [](T* gx, const T* g, const T*, const T* yv, std::size_t n) {
        kernels::table<T>().mul(g, yv, gx, n);
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary_op(
      "log", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = std::log(a[i]);
      },
      [](T* gx, const T* g, const T* xv, const T*, std::size_t n) {
        kernels::table<T>().div(g, xv, gx, n);
      });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return detail::unary_op(
      "sin", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = std::sin(a[i]);
      },
      [](T* gx, const T* g, const T* xv, const T*, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * std::cos(xv[i]);
      });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
  return detail::unary_op(
      "cos", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = std::cos(a[i]);
      },
      [](T* gx, const T* g, const T* xv, const T*, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = -g[i] * std::sin(xv[i]);
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_op(
      "tanh", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = std::tanh(a[i]);
      },
      [](T* gx, const T* g, const T*, const T* yv, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * (T{1} - yv[i] * yv[i]);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      "sigmoid", x,
      [](const T* a, T* c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = T{1} / (T{1} + std::exp(-a[i]));
      },
      [](T* gx, const T* g, const T*, const T* yv, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * yv[i] * (T{1} - yv[i]);
      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return mul(x, sigmoid(x));
}

// ------------------------------------------------------------ reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::scalar(kernels::table<T>().sum(x.data(), x.numel()));
  detail::maybe_check(out, "sum");
  if (Tape<T>* tp = detail::common_tape<T>("sum", {&x})) {
    const auto xn = x.node;
    const std::int64_t n = x.numel();
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn, n](Tape<T>& t, const std::vector<T>& g) {
      std::vector<T> gx(static_cast<std::size_t>(n), g[0]);
      t.grad_accum(xn, gx.data(), gx.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::int64_t axis, bool keepdim = false) {
  const std::int64_t r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) contract_error("sum_axis: axis out of range for " + shape_str(x.shape));
  std::int64_t outer = 1, inner = 1;
  const std::int64_t len = x.shape[axis];
  for (std::int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= x.shape[i];

  Shape oshape;
  for (std::int64_t i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) oshape.push_back(1);
    } else {
      oshape.push_back(x.shape[i]);
    }
  }
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& k = kernels::table<T>();
  for (std::int64_t o = 0; o < outer; ++o) {
    const T* src = x.data() + o * len * inner;
    T* dst = out.data() + o * inner;
    if (inner == 1) {
      dst[0] = k.sum(src, len);
    } else {
      for (std::int64_t l = 0; l < len; ++l) k.axpy(T{1}, src + l * inner, dst, inner);
    }
  }
  detail::maybe_check(out, "sum_axis");
  if (Tape<T>* tp = detail::common_tape<T>("sum_axis", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape,
                          [xn, outer, len, inner](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> gx(static_cast<std::size_t>(outer * len * inner));
                            for (std::int64_t o = 0; o < outer; ++o)
                              for (std::int64_t l = 0; l < len; ++l)
                                std::copy_n(g.data() + o * inner, inner,
                                            gx.data() + (o * len + l) * inner);
                            t.grad_accum(xn, gx.data(), gx.size());
                          });
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::int64_t axis, bool keepdim = false) {
  const std::int64_t r = x.rank();
  const std::int64_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) contract_error("mean_axis: axis out of range for " + shape_str(x.shape));
  return scale(sum_axis(x, a, keepdim), T{1} / static_cast<T>(x.shape[a]));
}

// ------------------------------------------------------------ structure

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape s) {
  // allow a single -1 wildcard
  std::int64_t known = 1;
  std::int64_t wild = -1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == -1) {
      if (wild >= 0) contract_error("reshape: more than one -1");
      wild = static_cast<std::int64_t>(i);
    } else {
      known *= s[i];
    }
  }
  if (wild >= 0) s[wild] = x.numel() / known;
  if (shape_numel(s) != x.numel())
    contract_error("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(s));
  Tensor<T> out;
  out.shape = std::move(s);
  out.store = x.store;  // view
  if (Tape<T>* tp = detail::common_tape<T>("reshape", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn](Tape<T>& t, const std::vector<T>& g) {
      t.grad_accum(xn, g.data(), g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.rank() != 2) contract_error("transpose2d: expected rank 2, got " + shape_str(x.shape));
  const std::int64_t m = x.shape[0], n = x.shape[1];
  Tensor<T> out = Tensor<T>::zeros({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out.data()[j * m + i] = x.data()[i * n + j];
  if (Tape<T>* tp = detail::common_tape<T>("transpose2d", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape, [xn, m, n](Tape<T>& t, const std::vector<T>& g) {
      std::vector<T> gx(static_cast<std::size_t>(m * n));
      for (std::int64_t j = 0; j < n; ++j)
        for (std::int64_t i = 0; i < m; ++i) gx[i * n + j] = g[j * m + i];
      t.grad_accum(xn, gx.data(), gx.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t len) {
  const std::int64_t r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) contract_error("slice: axis out of range for " + shape_str(x.shape));
  if (start < 0 || len <= 0 || start + len > x.shape[axis])
    contract_error("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                   ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(x.shape));
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= x.shape[i];
  const std::int64_t d = x.shape[axis];
  Shape oshape = x.shape;
  oshape[axis] = len;
  Tensor<T> out = Tensor<T>::zeros(oshape);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * d + start) * inner, len * inner, out.data() + o * len * inner);
  if (Tape<T>* tp = detail::common_tape<T>("slice", {&x})) {
    const auto xn = x.node;
    const std::int64_t total = x.numel();
    out.tape = tp;
    out.node = tp->record({xn}, out.shape,
                          [xn, outer, inner, d, start, len, total](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> gx(static_cast<std::size_t>(total), T{0});
                            for (std::int64_t o = 0; o < outer; ++o)
                              std::copy_n(g.data() + o * len * inner, len * inner,
                                          gx.data() + (o * d + start) * inner);
                            t.grad_accum(xn, gx.data(), gx.size());
                          });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::int64_t axis) {
  if (xs.empty()) contract_error("concat: empty input list");
  const std::int64_t r = xs[0].rank();
  std::int64_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) contract_error("concat: axis out of range");
  Shape oshape = xs[0].shape;
  std::int64_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.rank() != r) contract_error("concat: rank mismatch");
    for (std::int64_t i = 0; i < r; ++i)
      if (i != a && x.shape[i] != oshape[i])
        contract_error("concat: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(oshape));
    total_axis += x.shape[a];
  }
  oshape[a] = total_axis;
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < a; ++i) outer *= oshape[i];
  for (std::int64_t i = a + 1; i < r; ++i) inner *= oshape[i];
  Tensor<T> out = Tensor<T>::zeros(oshape);
  std::int64_t off = 0;
  for (const auto& x : xs) {
    const std::int64_t da = x.shape[a];
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * da * inner, da * inner,
                  out.data() + (o * total_axis + off) * inner);
    off += da;
  }
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  Tape<T>* tp = nullptr;
  for (const auto& x : xs)
    if (x.on_tape()) {
      if (!tp) tp = x.tape;
      else if (tp != x.tape) contract_error("concat: operands recorded on different tapes");
    }
  if (tp) {
    std::vector<std::int32_t> nodes;
    std::vector<std::int64_t> widths;
    for (const auto& x : xs) {
      nodes.push_back(x.node);
      widths.push_back(x.shape[a]);
    }
    out.tape = tp;
    out.node = tp->record(nodes, out.shape,
                          [nodes, widths, outer, inner, total_axis](Tape<T>& t,
                                                                    const std::vector<T>& g) {
                            std::int64_t off = 0;
                            for (std::size_t i = 0; i < nodes.size(); ++i) {
                              const std::int64_t da = widths[i];
                              if (nodes[i] >= 0) {
                                std::vector<T> gx(static_cast<std::size_t>(outer * da * inner));
                                for (std::int64_t o = 0; o < outer; ++o)
                                  std::copy_n(g.data() + (o * total_axis + off) * inner, da * inner,
                                              gx.data() + o * da * inner);
                                t.grad_accum(nodes[i], gx.data(), gx.size());
                              }
                              off += da;
                            }
                          });
  }
  return out;
}

// Row lookup into an embedding table.
template <typename T>
Tensor<T> gather_row(const Tensor<T>& table, std::int64_t row) {
  if (table.rank() != 2) contract_error("gather_row: table must be rank 2");
  const std::int64_t r = table.shape[0], e = table.shape[1];
  if (row < 0 || row >= r)
    contract_error("gather_row: row " + std::to_string(row) + " out of range [0," +
                   std::to_string(r) + ")");
  Tensor<T> out = Tensor<T>::zeros({e});
  std::copy_n(table.data() + row * e, e, out.data());
  if (Tape<T>* tp = detail::common_tape<T>("gather_row", {&table})) {
    const auto tn = table.node;
    out.tape = tp;
    out.node = tp->record({tn}, out.shape, [tn, row, r, e](Tape<T>& t, const std::vector<T>& g) {
      std::vector<T> gx(static_cast<std::size_t>(r * e), T{0});
      std::copy_n(g.data(), e, gx.data() + row * e);
      t.grad_accum(tn, gx.data(), gx.size());
    });
  }
  return out;
}

// out[2i] = a[i], out[2i+1] = b[i]
template <typename T>
Tensor<T> interleave2(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.shape[0] != b.shape[0])
    contract_error("interleave2: want two equal rank-1 tensors, got " + shape_str(a.shape) +
                   " and " + shape_str(b.shape));
  const std::int64_t n = a.shape[0];
  Tensor<T> out = Tensor<T>::zeros({2 * n});
  for (std::int64_t i = 0; i < n; ++i) {
    out.data()[2 * i] = a.data()[i];
    out.data()[2 * i + 1] = b.data()[i];
  }
  if (Tape<T>* tp = detail::common_tape<T>("interleave2", {&a, &b})) {
    const auto an = a.node, bn = b.node;
    out.tape = tp;
    out.node = tp->record({an, bn}, out.shape, [an, bn, n](Tape<T>& t, const std::vector<T>& g) {
      if (an >= 0) {
        std::vector<T> ga(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) ga[i] = g[2 * i];
        t.grad_accum(an, ga.data(), ga.size());
      }
      if (bn >= 0) {
        std::vector<T> gb(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) gb[i] = g[2 * i + 1];
        t.grad_accum(bn, gb.data(), gb.size());
      }
    });
  }
  return out;
}

// --------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    contract_error("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                   shape_str(b.shape));
  const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out = Tensor<T>::zeros({m, n});
  kernels::table<T>().gemm_nn(a.data(), b.data(), out.data(), m, k, n);
  detail::maybe_check(out, "matmul");
  if (Tape<T>* tp = detail::common_tape<T>("matmul", {&a, &b})) {
    const auto an = a.node, bn = b.node;
    const Tensor<T> av = a.detach(), bv = b.detach();
    out.tape = tp;
    out.node = tp->record({an, bn}, out.shape,
                          [an, bn, av, bv, m, k, n](Tape<T>& t, const std::vector<T>& g) {
                            const auto& kt = kernels::table<T>();
                            if (an >= 0) {
                              std::vector<T> da(static_cast<std::size_t>(m * k), T{0});
                              kt.gemm_nt(g.data(), bv.data(), da.data(), m, n, k);
                              t.grad_accum(an, da.data(), da.size());
                            }
                            if (bn >= 0) {
                              std::vector<T> db(static_cast<std::size_t>(k * n), T{0});
                              kt.gemm_tn(av.data(), g.data(), db.data(), k, m, n);
                              t.grad_accum(bn, db.data(), db.size());
                            }
                          });
  }
  return out;
}

// -------------------------------------------------- spatial mixing ops

namespace detail {

// Shared core for depthwise 1-d convolution along the last axis of [C,H,W]
// (circular wrap) or the middle axis (edge clamp). Kernels are per-channel,
// true-convolution orientation: out[j] = sum_k w[k] * x[j - k + center].
enum class Pad { circular, clamp };

inline std::int64_t wrap_idx(std::int64_t i, std::int64_t n) {
  i %= n;
  return i < 0 ? i + n : i;
}

inline std::int64_t clamp_idx(std::int64_t i, std::int64_t n) {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

}  // namespace detail

// Depthwise circular convolution along the last (longitude) axis.
// x: [C,H,W], w: [C,K]; out[c,h,j] = sum_k w[c,k] * x[c,h,(j-k+center) mod W]
template <typename T>
Tensor<T> conv_lon_circular(const Tensor<T>& x, const Tensor<T>& w, std::int64_t center) {
  if (x.rank() != 3 || w.rank() != 2 || w.shape[0] != x.shape[0])
    contract_error("conv_lon_circular: want x [C,H,W], w [C,K]; got " + shape_str(x.shape) +
                   ", " + shape_str(w.shape));
  const std::int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2], K = w.shape[1];
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  const auto& kt = kernels::table<T>();
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t k = 0; k < K; ++k) {
      const T wk = w.data()[c * K + k];
      const std::int64_t s = detail::wrap_idx(center - k, W);  // out[j] += wk * x[(j+s) mod W]
      for (std::int64_t h = 0; h < H; ++h) {
        const T* xr = x.data() + (c * H + h) * W;
        T* orow = out.data() + (c * H + h) * W;
        kt.axpy(wk, xr + s, orow, W - s);
        kt.axpy(wk, xr, orow + (W - s), s);
      }
    }
  }
  detail::maybe_check(out, "conv_lon_circular");
  if (Tape<T>* tp = detail::common_tape<T>("conv_lon_circular", {&x, &w})) {
    const auto xn = x.node, wn = w.node;
    const Tensor<T> xv = x.detach(), wv = w.detach();
    out.tape = tp;
    out.node = tp->record(
        {xn, wn}, out.shape,
        [xn, wn, xv, wv, C, H, W, K, center](Tape<T>& t, const std::vector<T>& g) {
          const auto& kt = kernels::table<T>();
          if (xn >= 0) {
            std::vector<T> gx(static_cast<std::size_t>(C * H * W), T{0});
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t k = 0; k < K; ++k) {
                const T wk = wv.data()[c * K + k];
                // adjoint: gx[i] += wk * g[(i - s) mod W]  ==  gx[(j+s)] += wk*g[j]
                const std::int64_t s = detail::wrap_idx(center - k, W);
                for (std::int64_t h = 0; h < H; ++h) {
                  const T* gr = g.data() + (c * H + h) * W;
                  T* gxr = gx.data() + (c * H + h) * W;
                  kt.axpy(wk, gr, gxr + s, W - s);
                  kt.axpy(wk, gr + (W - s), gxr, s);
                }
              }
            t.grad_accum(xn, gx.data(), gx.size());
          }
          if (wn >= 0) {
            std::vector<T> gw(static_cast<std::size_t>(C * K), T{0});
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t k = 0; k < K; ++k) {
                const std::int64_t s = detail::wrap_idx(center - k, W);
                T acc{0};
                for (std::int64_t h = 0; h < H; ++h) {
                  const T* xr = xv.data() + (c * H + h) * W;
                  const T* gr = g.data() + (c * H + h) * W;
                  acc += kt.dot(gr, xr + s, W - s);
                  acc += kt.dot(gr + (W - s), xr, s);
                }
                gw[c * K + k] = acc;
              }
            t.grad_accum(wn, gw.data(), gw.size());
          }
        });
  }
  return out;
}

// Depthwise convolution along the middle (latitude) axis with edge-replicate
// boundaries. x: [C,H,W], w: [C,K].
template <typename T>
Tensor<T> conv_lat_clamped(const Tensor<T>& x, const Tensor<T>& w, std::int64_t center) {
  if (x.rank() != 3 || w.rank() != 2 || w.shape[0] != x.shape[0])
    contract_error("conv_lat_clamped: want x [C,H,W], w [C,K]; got " + shape_str(x.shape) + ", " +
                   shape_str(w.shape));
  const std::int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2], K = w.shape[1];
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  const auto& kt = kernels::table<T>();
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t k = 0; k < K; ++k) {
      const T wk = w.data()[c * K + k];
      for (std::int64_t h = 0; h < H; ++h) {
        const std::int64_t hs = detail::clamp_idx(h - k + center, H);
        kt.axpy(wk, x.data() + (c * H + hs) * W, out.data() + (c * H + h) * W, W);
      }
    }
  detail::maybe_check(out, "conv_lat_clamped");
  if (Tape<T>* tp = detail::common_tape<T>("conv_lat_clamped", {&x, &w})) {
    const auto xn = x.node, wn = w.node;
    const Tensor<T> xv = x.detach(), wv = w.detach();
    out.tape = tp;
    out.node = tp->record(
        {xn, wn}, out.shape,
        [xn, wn, xv, wv, C, H, W, K, center](Tape<T>& t, const std::vector<T>& g) {
          const auto& kt = kernels::table<T>();
          if (xn >= 0) {
            std::vector<T> gx(static_cast<std::size_t>(C * H * W), T{0});
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t k = 0; k < K; ++k) {
                const T wk = wv.data()[c * K + k];
                for (std::int64_t h = 0; h < H; ++h) {
                  const std::int64_t hs = detail::clamp_idx(h - k + center, H);
                  kt.axpy(wk, g.data() + (c * H + h) * W, gx.data() + (c * H + hs) * W, W);
                }
              }
            t.grad_accum(xn, gx.data(), gx.size());
          }
          if (wn >= 0) {
            std::vector<T> gw(static_cast<std::size_t>(C * K), T{0});
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t k = 0; k < K; ++k) {
                T acc{0};
                for (std::int64_t h = 0; h < H; ++h) {
                  const std::int64_t hs = detail::clamp_idx(h - k + center, H);
                  acc += kt.dot(g.data() + (c * H + h) * W, xv.data() + (c * H + hs) * W, W);
                }
                gw[c * K + k] = acc;
              }
            t.grad_accum(wn, gw.data(), gw.size());
          }
        });
  }
  return out;
}

// 1-d circular convolution of a signal, true-convolution indexing:
// out[j] = sum_k w[k] * x[(j - k) mod N]
template <typename T>
Tensor<T> circular_conv_1d(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 1 || w.rank() != 1)
    contract_error("circular_conv_1d: want rank-1 signal and kernel; got " + shape_str(x.shape) +
                   ", " + shape_str(w.shape));
  Tensor<T> x3 = reshape(x, {1, 1, x.shape[0]});
  Tensor<T> w2 = reshape(w, {1, w.shape[0]});
  return reshape(conv_lon_circular(x3, w2, 0), {x.shape[0]});
}

// ----------------------------------------------------- pool / upsample

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::int64_t fh, std::int64_t fw) {
  if (x.rank() != 3 || fh <= 0 || fw <= 0 || x.shape[1] % fh != 0 || x.shape[2] % fw != 0)
    contract_error("avg_pool2d: shape " + shape_str(x.shape) + " not divisible by " +
                   std::to_string(fh) + "x" + std::to_string(fw));
  const std::int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const std::int64_t h2 = H / fh, w2 = W / fw;
  Tensor<T> out = Tensor<T>::zeros({C, h2, w2});
  const T invn = T{1} / static_cast<T>(fh * fw);
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < h2; ++i)
      for (std::int64_t j = 0; j < w2; ++j) {
        T acc{0};
        for (std::int64_t a = 0; a < fh; ++a)
          for (std::int64_t b = 0; b < fw; ++b)
            acc += x.data()[(c * H + i * fh + a) * W + j * fw + b];
        out.data()[(c * h2 + i) * w2 + j] = acc * invn;
      }
  if (Tape<T>* tp = detail::common_tape<T>("avg_pool2d", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape,
                          [xn, C, H, W, h2, w2, fh, fw, invn](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> gx(static_cast<std::size_t>(C * H * W), T{0});
                            for (std::int64_t c = 0; c < C; ++c)
                              for (std::int64_t i = 0; i < h2; ++i)
                                for (std::int64_t j = 0; j < w2; ++j) {
                                  const T gv = g[(c * h2 + i) * w2 + j] * invn;
                                  for (std::int64_t a = 0; a < fh; ++a)
                                    for (std::int64_t b = 0; b < fw; ++b)
                                      gx[(c * H + i * fh + a) * W + j * fw + b] += gv;
                                }
                            t.grad_accum(xn, gx.data(), gx.size());
                          });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::int64_t fh, std::int64_t fw) {
  if (x.rank() != 3 || fh <= 0 || fw <= 0)
    contract_error("upsample_nearest: want [C,h,w], got " + shape_str(x.shape));
  const std::int64_t C = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::int64_t H = h * fh, W = w * fw;
  Tensor<T> out = Tensor<T>::zeros({C, H, W});
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < H; ++i)
      for (std::int64_t j = 0; j < W; ++j)
        out.data()[(c * H + i) * W + j] = x.data()[(c * h + i / fh) * w + j / fw];
  if (Tape<T>* tp = detail::common_tape<T>("upsample_nearest", {&x})) {
    const auto xn = x.node;
    out.tape = tp;
    out.node = tp->record({xn}, out.shape,
                          [xn, C, H, W, h, w, fh, fw](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> gx(static_cast<std::size_t>(C * h * w), T{0});
                            for (std::int64_t c = 0; c < C; ++c)
                              for (std::int64_t i = 0; i < H; ++i)
                                for (std::int64_t j = 0; j < W; ++j)
                                  gx[(c * h + i / fh) * w + j / fw] += g[(c * H + i) * W + j];
                            t.grad_accum(xn, gx.data(), gx.size());
                          });
  }
  return out;
}

// ------------------------------------------------------------ composites

// Layer normalization over axis 0 (the channel axis in [C, cells] layout).
template <typename T>
Tensor<T> layer_norm_axis0(const Tensor<T>& x, T eps = static_cast<T>(1e-5)) {
  if (x.rank() < 1) contract_error("layer_norm_axis0: rank-0 input");
  Tensor<T> mu = mean_axis(x, 0, /*keepdim=*/true);
  Tensor<T> xc = sub(x, mu);
  Tensor<T> var = mean_axis(square(xc), 0, /*keepdim=*/true);
  return div(xc, sqrt(add_const(var, eps)));
}

// Root-mean-square over all elements (scalar).
template <typename T>
Tensor<T> rms(const Tensor<T>& x) {
  return sqrt(mean(square(x)));
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& x) { return Tensor<T>::zeros(x.shape); }

template <typename T>
Tensor<T> ones_like(const Tensor<T>& x) { return Tensor<T>::full(x.shape, T{1}); }

}  // namespace gridcast
