#include "gridcast/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace gridcast::kernels {
namespace {

Table<float> g_table_f32;
Table<double> g_table_f64;
Isa g_active = Isa::scalar;
bool g_initialized = false;

void apply(Isa isa) {
  if (isa == Isa::avx2 && avx2_impl::available() && cpu_has_avx2()) {
    avx2_impl::fill(g_table_f32);
    avx2_impl::fill(g_table_f64);
    g_active = Isa::avx2;
  } else {
    scalar_impl::fill(g_table_f32);
    scalar_impl::fill(g_table_f64);
    g_active = Isa::scalar;
  }
  g_initialized = true;
}

void ensure_initialized() {
  if (!g_initialized) select_isa_auto();
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() {
  ensure_initialized();
  return g_active;
}

void select_isa(Isa isa) { apply(isa); }

void select_isa_auto() {
  Isa want = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  if (const char* env = std::getenv("GRIDCAST_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) want = Isa::scalar;
    else if (std::strcmp(env, "avx2") == 0) want = Isa::avx2;
  }
  apply(want);
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

template <>
const Table<float>& table<float>() {
  ensure_initialized();
  return g_table_f32;
}

template <>
const Table<double>& table<double>() {
  ensure_initialized();
  return g_table_f64;
}

}  // namespace gridcast::kernels
