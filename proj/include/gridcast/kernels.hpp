#pragma once

#include <cstddef>

// Data-parallel inner loops behind the tensor engine. Every kernel has a
// scalar reference implementation and (on x86-64 with AVX2+FMA) a vectorized
// variant; the active set is chosen once at startup and can be forced for
// equivalence testing via select_isa() or the GRIDCAST_SIMD environment
// variable (values: auto, scalar, avx2).
//
// Contracts shared by all kernels:
//  - buffers do not overlap, except that an output may alias the first input
//    for elementwise ops
//  - gemm_* accumulate into C; callers zero C when they want a plain product
//  - elementwise ops are bit-identical across ISAs (single IEEE op per lane);
//    reductions and gemms may differ by association order

namespace gridcast::kernels {

enum class Isa { scalar, avx2 };

bool cpu_has_avx2();
Isa active_isa();
void select_isa(Isa isa);
void select_isa_auto();  // cpu probe + GRIDCAST_SIMD override
const char* isa_name(Isa isa);

template <typename T>
struct Table {
  // elementwise binary: c[i] = a[i] <op> b[i]
  void (*add)(const T* a, const T* b, T* c, std::size_t n);
  void (*sub)(const T* a, const T* b, T* c, std::size_t n);
  void (*mul)(const T* a, const T* b, T* c, std::size_t n);
  void (*div)(const T* a, const T* b, T* c, std::size_t n);
  void (*max)(const T* a, const T* b, T* c, std::size_t n);

  // elementwise unary
  void (*neg)(const T* a, T* c, std::size_t n);
  void (*abs)(const T* a, T* c, std::size_t n);
  void (*square)(const T* a, T* c, std::size_t n);
  void (*sqrt)(const T* a, T* c, std::size_t n);

  // scalar broadcasts
  void (*scale)(const T* a, T s, T* c, std::size_t n);       // c = s*a
  void (*add_scalar)(const T* a, T s, T* c, std::size_t n);  // c = a+s
  void (*axpy)(T a, const T* x, T* y, std::size_t n);        // y += a*x
  void (*fmacc)(const T* a, const T* b, T* c, std::size_t n);  // c += a*b

  // reductions
  T (*sum)(const T* a, std::size_t n);
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*max_abs)(const T* a, std::size_t n);

  // row-major gemm, all accumulating:
  //   gemm_nn: C[M,N] += A[M,K] * B[K,N]
  //   gemm_nt: C[M,N] += A[M,K] * B[N,K]^T
  //   gemm_tn: C[M,N] += A[K,M]^T * B[K,N]
  void (*gemm_nn)(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                  std::size_t n);
  void (*gemm_nt)(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                  std::size_t n);
  void (*gemm_tn)(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                  std::size_t n);
};

template <typename T>
const Table<T>& table();

namespace scalar_impl {
void fill(Table<float>& t);
void fill(Table<double>& t);
}  // namespace scalar_impl

namespace avx2_impl {
bool available();
void fill(Table<float>& t);
void fill(Table<double>& t);
}  // namespace avx2_impl

}  // namespace gridcast::kernels
