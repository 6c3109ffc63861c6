// Equivalence tests between the scalar reference kernels and the vector
// variants, plus correctness oracles (naive loops) for the gemms.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "gridcast/kernels.hpp"
#include "gridcast/rng.hpp"

using namespace gridcast;
namespace k = gridcast::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

template <typename T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(double(a[i]) - double(b[i])) /
                     (std::fabs(double(a[i])) + std::fabs(double(b[i])) + 1e-30);
    if (d > m) m = d;
  }
  return m;
}

struct IsaGuard {
  ~IsaGuard() { k::select_isa_auto(); }
};

template <typename T>
void check_elementwise_bit_exact() {
  if (!k::cpu_has_avx2()) return;
  Rng rng(42);
  // sizes straddling the vector width, including tails
  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1000u}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng, 0.5, 2.0);  // keep div well-behaved
    std::vector<T> r_scalar(n), r_simd(n);

    auto run_binary = [&](auto get) {
      k::select_isa(k::Isa::scalar);
      get(k::table<T>())(a.data(), b.data(), r_scalar.data(), n);
      k::select_isa(k::Isa::avx2);
      get(k::table<T>())(a.data(), b.data(), r_simd.data(), n);
      CHECK(r_scalar == r_simd);
    };
    run_binary([](const k::Table<T>& t) { return t.add; });
    run_binary([](const k::Table<T>& t) { return t.sub; });
    run_binary([](const k::Table<T>& t) { return t.mul; });
    run_binary([](const k::Table<T>& t) { return t.div; });
    run_binary([](const k::Table<T>& t) { return t.max; });

    auto run_unary = [&](auto get) {
      k::select_isa(k::Isa::scalar);
      get(k::table<T>())(b.data(), r_scalar.data(), n);
      k::select_isa(k::Isa::avx2);
      get(k::table<T>())(b.data(), r_simd.data(), n);
      CHECK(r_scalar == r_simd);
    };
    run_unary([](const k::Table<T>& t) { return t.neg; });
    run_unary([](const k::Table<T>& t) { return t.abs; });
    run_unary([](const k::Table<T>& t) { return t.square; });
    run_unary([](const k::Table<T>& t) { return t.sqrt; });

    const T s = static_cast<T>(1.7);
    k::select_isa(k::Isa::scalar);
    k::table<T>().scale(a.data(), s, r_scalar.data(), n);
    k::select_isa(k::Isa::avx2);
    k::table<T>().scale(a.data(), s, r_simd.data(), n);
    CHECK(r_scalar == r_simd);

    k::select_isa(k::Isa::scalar);
    k::table<T>().add_scalar(a.data(), s, r_scalar.data(), n);
    k::select_isa(k::Isa::avx2);
    k::table<T>().add_scalar(a.data(), s, r_simd.data(), n);
    CHECK(r_scalar == r_simd);
  }
}

template <typename T>
void check_reductions_close(double tol) {
  if (!k::cpu_has_avx2()) return;
  Rng rng(7);
  for (std::size_t n : {3u, 17u, 256u, 2048u}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng);
    k::select_isa(k::Isa::scalar);
    const double sum_s = k::table<T>().sum(a.data(), n);
    const double dot_s = k::table<T>().dot(a.data(), b.data(), n);
    const double ma_s = k::table<T>().max_abs(a.data(), n);
    k::select_isa(k::Isa::avx2);
    const double sum_v = k::table<T>().sum(a.data(), n);
    const double dot_v = k::table<T>().dot(a.data(), b.data(), n);
    const double ma_v = k::table<T>().max_abs(a.data(), n);
    CHECK(std::fabs(sum_s - sum_v) <= tol * (std::fabs(sum_s) + 1.0));
    CHECK(std::fabs(dot_s - dot_v) <= tol * (std::fabs(dot_s) + 1.0));
    CHECK(ma_s == ma_v);  // max is association-free
  }
}

// naive reference for all three gemm layouts
template <typename T>
void gemm_naive(char mode, const std::vector<T>& a, const std::vector<T>& b, std::vector<T>& c,
                std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) {
        double av = mode == 't' ? a[p * m + i] : a[i * k + p];
        double bv = mode == 'n' ? b[p * n + j] : (mode == 'x' ? b[j * k + p] : b[p * n + j]);
        acc += av * bv;
      }
      c[i * n + j] = static_cast<T>(acc);
    }
}

template <typename T>
void check_gemm(double tol) {
  Rng rng(11);
  const std::size_t m = 9, kk = 13, n = 21;
  auto a = random_vec<T>(m * kk, rng);
  auto at = random_vec<T>(kk * m, rng);
  auto b = random_vec<T>(kk * n, rng);
  auto bt = random_vec<T>(n * kk, rng);

  for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2}) {
    if (isa == k::Isa::avx2 && !k::cpu_has_avx2()) continue;
    k::select_isa(isa);
    std::vector<T> c(m * n, T{0}), ref(m * n, T{0});
    k::table<T>().gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
    gemm_naive('n', a, b, ref, m, kk, n);
    CHECK(max_rel_diff(c, ref) < tol);

    std::fill(c.begin(), c.end(), T{0});
    std::fill(ref.begin(), ref.end(), T{0});
    k::table<T>().gemm_nt(a.data(), bt.data(), c.data(), m, kk, n);
    gemm_naive('x', a, bt, ref, m, kk, n);
    CHECK(max_rel_diff(c, ref) < tol);

    std::fill(c.begin(), c.end(), T{0});
    std::fill(ref.begin(), ref.end(), T{0});
    k::table<T>().gemm_tn(at.data(), b.data(), c.data(), m, kk, n);
    gemm_naive('t', at, b, ref, m, kk, n);
    CHECK(max_rel_diff(c, ref) < tol);
  }
}

}  // namespace

TEST_CASE("isa dispatch honors explicit selection") {
  IsaGuard guard;
  k::select_isa(k::Isa::scalar);
  CHECK(k::active_isa() == k::Isa::scalar);
  if (k::cpu_has_avx2()) {
    k::select_isa(k::Isa::avx2);
    CHECK(k::active_isa() == k::Isa::avx2);
  }
  k::select_isa_auto();
}

TEST_CASE("elementwise kernels are bit-identical across isas") {
  IsaGuard guard;
  check_elementwise_bit_exact<float>();
  check_elementwise_bit_exact<double>();
}

TEST_CASE("axpy and fmacc agree across isas within fma slack") {
  IsaGuard guard;
  if (!k::cpu_has_avx2()) return;
  Rng rng(3);
  for (std::size_t n : {5u, 64u, 777u}) {
    auto x = random_vec<double>(n, rng);
    auto y0 = random_vec<double>(n, rng);
    auto y1 = y0, y2 = y0;
    auto max_abs_diff = [](const std::vector<double>& p, const std::vector<double>& q) {
      double m = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, std::fabs(p[i] - q[i]));
      return m;
    };
    k::select_isa(k::Isa::scalar);
    k::table<double>().axpy(0.37, x.data(), y1.data(), n);
    k::select_isa(k::Isa::avx2);
    k::table<double>().axpy(0.37, x.data(), y2.data(), n);
    CHECK(max_abs_diff(y1, y2) < 1e-14);

    auto c1 = y0, c2 = y0;
    k::select_isa(k::Isa::scalar);
    k::table<double>().fmacc(x.data(), y0.data(), c1.data(), n);
    k::select_isa(k::Isa::avx2);
    k::table<double>().fmacc(x.data(), y0.data(), c2.data(), n);
    CHECK(max_abs_diff(c1, c2) < 1e-14);
  }
}

TEST_CASE("reductions agree across isas within association slack") {
  IsaGuard guard;
  check_reductions_close<float>(1e-5);
  check_reductions_close<double>(1e-13);
}

TEST_CASE("gemm variants match the naive oracle") {
  IsaGuard guard;
  check_gemm<float>(2e-5);
  check_gemm<double>(1e-12);
}
