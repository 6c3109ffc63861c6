// AVX2 + FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; nothing inline-shared lives here so no vector code can
// leak into baseline objects. Elementwise kernels perform exactly one IEEE
// operation per element and are bit-identical to the scalar reference;
// reductions and gemms keep per-lane partials and differ from the reference
// only by association order.

#include "gridcast/kernels.hpp"

#ifdef GRIDCAST_HAVE_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace gridcast::kernels::avx2_impl {
namespace {

// ---------------------------------------------------------------- float ----

void add_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}

void div_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_div_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] / b[i];
}

void max_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_max_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] > b[i] ? a[i] : b[i];
}

void neg_f(const float* a, float* c, std::size_t n) {
  const __m256 sign = _mm256_set1_ps(-0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_xor_ps(_mm256_loadu_ps(a + i), sign));
  for (; i < n; ++i) c[i] = -a[i];
}

void abs_f(const float* a, float* c, std::size_t n) {
  const __m256 mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_and_ps(_mm256_loadu_ps(a + i), mask));
  for (; i < n; ++i) c[i] = std::fabs(a[i]);
}

void square_f(const float* a, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(a + i);
    _mm256_storeu_ps(c + i, _mm256_mul_ps(v, v));
  }
  for (; i < n; ++i) c[i] = a[i] * a[i];
}

void sqrt_f(const float* a, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_sqrt_ps(_mm256_loadu_ps(a + i)));
  for (; i < n; ++i) c[i] = std::sqrt(a[i]);
}

void scale_f(const float* a, float s, float* c, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_mul_ps(vs, _mm256_loadu_ps(a + i)));
  for (; i < n; ++i) c[i] = s * a[i];
}

void add_scalar_f(const float* a, float s, float* c, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i), vs));
  for (; i < n; ++i) c[i] = a[i] + s;
}

void axpy_f(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void fmacc_f(const float* a, const float* b, float* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                            _mm256_loadu_ps(c + i)));
  for (; i < n; ++i) c[i] = std::fma(a[i], b[i], c[i]);
}

float hsum_f(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float sum_f(const float* a, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float s = hsum_f(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

float dot_f(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum_f(acc);
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

float max_abs_f(const float* a, std::size_t n) {
  const __m256 mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_max_ps(acc, _mm256_and_ps(_mm256_loadu_ps(a + i), mask));
  float lanes[8];
  _mm256_storeu_ps(lanes, acc);
  float s = 0.0f;
  for (float v : lanes)
    if (v > s) s = v;
  for (; i < n; ++i) {
    const float v = std::fabs(a[i]);
    if (v > s) s = v;
  }
  return s;
}

void gemm_nn_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy_f(a[i * k + p], b + p * n, c + i * n, n);
}

void gemm_nt_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_f(a + i * k, b + j * k, k);
}

void gemm_tn_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) axpy_f(a[p * m + i], b + p * n, c + i * n, n);
}

// --------------------------------------------------------------- double ----

void add_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}

void sub_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}

void mul_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}

void div_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] / b[i];
}

void max_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_max_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] > b[i] ? a[i] : b[i];
}

void neg_d(const double* a, double* c, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_xor_pd(_mm256_loadu_pd(a + i), sign));
  for (; i < n; ++i) c[i] = -a[i];
}

void abs_d(const double* a, double* c, std::size_t n) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_and_pd(_mm256_loadu_pd(a + i), mask));
  for (; i < n; ++i) c[i] = std::fabs(a[i]);
}

void square_d(const double* a, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(a + i);
    _mm256_storeu_pd(c + i, _mm256_mul_pd(v, v));
  }
  for (; i < n; ++i) c[i] = a[i] * a[i];
}

void sqrt_d(const double* a, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_sqrt_pd(_mm256_loadu_pd(a + i)));
  for (; i < n; ++i) c[i] = std::sqrt(a[i]);
}

void scale_d(const double* a, double s, double* c, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_mul_pd(vs, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) c[i] = s * a[i];
}

void add_scalar_d(const double* a, double s, double* c, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) c[i] = a[i] + s;
}

void axpy_d(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void fmacc_d(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                            _mm256_loadu_pd(c + i)));
  for (; i < n; ++i) c[i] = std::fma(a[i], b[i], c[i]);
}

double hsum_d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double sum_d(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum_d(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_d(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum_d(acc);
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

double max_abs_d(const double* a, std::size_t n) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_max_pd(acc, _mm256_and_pd(_mm256_loadu_pd(a + i), mask));
  double lanes[4];
  _mm256_storeu_pd(lanes, acc);
  double s = 0.0;
  for (double v : lanes)
    if (v > s) s = v;
  for (; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > s) s = v;
  }
  return s;
}

void gemm_nn_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy_d(a[i * k + p], b + p * n, c + i * n, n);
}

void gemm_nt_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_d(a + i * k, b + j * k, k);
}

void gemm_tn_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) axpy_d(a[p * m + i], b + p * n, c + i * n, n);
}

}  // namespace

bool available() { return true; }

void fill(Table<float>& t) {
  t.add = add_f;
  t.sub = sub_f;
  t.mul = mul_f;
  t.div = div_f;
  t.max = max_f;
  t.neg = neg_f;
  t.abs = abs_f;
  t.square = square_f;
  t.sqrt = sqrt_f;
  t.scale = scale_f;
  t.add_scalar = add_scalar_f;
  t.axpy = axpy_f;
  t.fmacc = fmacc_f;
  t.sum = sum_f;
  t.dot = dot_f;
  t.max_abs = max_abs_f;
  t.gemm_nn = gemm_nn_f;
  t.gemm_nt = gemm_nt_f;
  t.gemm_tn = gemm_tn_f;
}

void fill(Table<double>& t) {
  t.add = add_d;
  t.sub = sub_d;
  t.mul = mul_d;
  t.div = div_d;
  t.max = max_d;
  t.neg = neg_d;
  t.abs = abs_d;
  t.square = square_d;
  t.sqrt = sqrt_d;
  t.scale = scale_d;
  t.add_scalar = add_scalar_d;
  t.axpy = axpy_d;
  t.fmacc = fmacc_d;
  t.sum = sum_d;
  t.dot = dot_d;
  t.max_abs = max_abs_d;
  t.gemm_nn = gemm_nn_d;
  t.gemm_nt = gemm_nt_d;
  t.gemm_tn = gemm_tn_d;
}

}  // namespace gridcast::kernels::avx2_impl

#else  // !GRIDCAST_HAVE_AVX2

namespace gridcast::kernels::avx2_impl {
bool available() { return false; }
void fill(Table<float>& t) { scalar_impl::fill(t); }
void fill(Table<double>& t) { scalar_impl::fill(t); }
}  // namespace gridcast::kernels::avx2_impl

#endif
