// Reference kernels. Plain loops, no ISA assumptions: this is the baseline the
// vector variants are equivalence-tested against.

#include <cmath>
#include <cstddef>

#include "gridcast/kernels.hpp"

namespace gridcast::kernels::scalar_impl {
namespace {

template <typename T>
void add_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

template <typename T>
void sub_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

template <typename T>
void mul_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

template <typename T>
void div_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] / b[i];
}

template <typename T>
void max_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] > b[i] ? a[i] : b[i];
}

template <typename T>
void neg_k(const T* a, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = -a[i];
}

template <typename T>
void abs_k(const T* a, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = std::fabs(a[i]);
}

template <typename T>
void square_k(const T* a, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * a[i];
}

template <typename T>
void sqrt_k(const T* a, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = std::sqrt(a[i]);
}

template <typename T>
void scale_k(const T* a, T s, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = s * a[i];
}

template <typename T>
void add_scalar_k(const T* a, T s, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + s;
}

template <typename T>
void axpy_k(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void fmacc_k(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] += a[i] * b[i];
}

template <typename T>
T sum_k(const T* a, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

template <typename T>
T dot_k(const T* a, const T* b, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T max_abs_k(const T* a, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T v = std::fabs(a[i]);
    if (v > s) s = v;
  }
  return s;
}

template <typename T>
void gemm_nn_k(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      axpy_k(a[i * k + p], b + p * n, c + i * n, n);
    }
  }
}

template <typename T>
void gemm_nt_k(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_k(a + i * k, b + j * k, k);
    }
  }
}

template <typename T>
void gemm_tn_k(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  // a is [k, m]; row p of a scatters into all rows of c
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      axpy_k(a[p * m + i], b + p * n, c + i * n, n);
    }
  }
}

template <typename T>
void fill_t(Table<T>& t) {
  t.add = add_k<T>;
  t.sub = sub_k<T>;
  t.mul = mul_k<T>;
  t.div = div_k<T>;
  t.max = max_k<T>;
  t.neg = neg_k<T>;
  t.abs = abs_k<T>;
  t.square = square_k<T>;
  t.sqrt = sqrt_k<T>;
  t.scale = scale_k<T>;
  t.add_scalar = add_scalar_k<T>;
  t.axpy = axpy_k<T>;
  t.fmacc = fmacc_k<T>;
  t.sum = sum_k<T>;
  t.dot = dot_k<T>;
  t.max_abs = max_abs_k<T>;
  t.gemm_nn = gemm_nn_k<T>;
  t.gemm_nt = gemm_nt_k<T>;
  t.gemm_tn = gemm_tn_k<T>;
}

}  // namespace

void fill(Table<float>& t) { fill_t(t); }
void fill(Table<double>& t) { fill_t(t); }

}  // namespace gridcast::kernels::scalar_impl
