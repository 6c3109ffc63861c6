#include <doctest.h>

#include <cmath>
#include <vector>

#include "gridcast/dual.hpp"
#include "gridcast/gradcheck.hpp"
#include "gridcast/ops.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/tape.hpp"
#include "gridcast/tensor.hpp"

using namespace gridcast;

namespace {

using T64 = Tensor<double>;

T64 randu(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  T64 t = T64::zeros(std::move(s));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise and reduction basics") {
  T64 a = T64::from({2}, {2, 3});
  T64 b = T64::from({2}, {4, 5});
  T64 c = mul(a, b);
  CHECK(c.vec() == std::vector<double>{8, 15});

  T64 x = reshape(T64::from({4}, {1, 2, 3, 4}), {2, 2});
  T64 s = sum_axis(x, 1);
  CHECK(s.vec() == std::vector<double>{3, 7});

  CHECK(sum(x).item() == doctest::Approx(10.0));
  CHECK(mean(x).item() == doctest::Approx(2.5));
}

TEST_CASE("circular convolution matches the hand oracle") {
  // true-convolution indexing: kernel [0,1,0] shifts the signal by one cell
  T64 sig = T64::from({4}, {1, 0, 0, 0});
  T64 ker = T64::from({3}, {0, 1, 0});
  T64 out = circular_conv_1d(sig, ker);
  CHECK(out.vec() == std::vector<double>{0, 1, 0, 0});

  // direct-sum oracle on a random case
  Rng rng(5);
  T64 s2 = randu({7}, rng);
  T64 k2 = randu({3}, rng);
  T64 o2 = circular_conv_1d(s2, k2);
  for (int j = 0; j < 7; ++j) {
    double acc = 0;
    for (int k = 0; k < 3; ++k) acc += k2.data()[k] * s2.data()[((j - k) % 7 + 7) % 7];
    CHECK(o2.data()[j] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("backward on scalars: x^2 and bilinear") {
  Tape<double> tape;
  T64 x = tape.leaf(T64::scalar(3.0));
  T64 loss = square(x);
  auto g = tape.backward(loss);
  CHECK(g.at(x).item() == doctest::Approx(6.0));

  Tape<double> tape2;
  T64 a = tape2.leaf(T64::from({2}, {1, 2}));
  T64 b = tape2.leaf(T64::from({2}, {3, 4}));
  auto g2 = tape2.backward(sum(mul(a, b)));
  CHECK(g2.at(a).vec() == std::vector<double>{3, 4});
  CHECK(g2.at(b).vec() == std::vector<double>{1, 2});
}

TEST_CASE("detach is value-preserving and gradient-blocking") {
  Rng rng(9);
  T64 xv = randu({5}, rng);
  Tape<double> tape;
  T64 x = tape.leaf(xv);
  T64 d = x.detach();
  CHECK(d.vec() == x.vec());
  CHECK_FALSE(d.on_tape());

  T64 loss = sum(mul(d, x));
  auto g = tape.backward(loss);
  CHECK(g.at(x).vec() == xv.vec());  // only the live factor contributes
}

TEST_CASE("grad_check: quadratic form is exact to roundoff") {
  Rng rng(21);
  T64 q = randu({4, 4}, rng);
  auto f = [&](const std::vector<T64>& in) {
    return sum(mul(in[0], matmul(reshape(in[0], {1, 4}), q)));
  };
  const double err = grad_check(f, {randu({4}, rng)}, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("every primitive's reverse rule matches finite differences") {
  Rng rng(33);
  auto check = [&](auto f, std::vector<T64> ins, double tol = 1e-6) {
    const double err = grad_check(f, ins, 1e-5);
    CHECK(err < tol);
  };

  T64 a = randu({3, 4}, rng), b = randu({3, 4}, rng, 0.5, 2.0);
  check([](const std::vector<T64>& i) { return sum(add(i[0], i[1])); }, {a, b});
  check([](const std::vector<T64>& i) { return sum(square(sub(i[0], i[1]))); }, {a, b});
  check([](const std::vector<T64>& i) { return sum(mul(i[0], i[1])); }, {a, b});
  check([](const std::vector<T64>& i) { return sum(div(i[0], i[1])); }, {a, b});
  check([](const std::vector<T64>& i) { return sum(maximum(i[0], i[1])); }, {a, b});
  check([](const std::vector<T64>& i) { return sum(neg(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(sqrt(i[0])); }, {b});
  check([](const std::vector<T64>& i) { return sum(exp(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(log(i[0])); }, {b});
  check([](const std::vector<T64>& i) { return sum(sin(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(cos(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(tanh(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(sigmoid(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(silu(i[0])); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(abs(i[0]))); }, {a});
  check([](const std::vector<T64>& i) { return mean(i[0]); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(sum_axis(i[0], 0))); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(mean_axis(i[0], 1, true))); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(reshape(i[0], {4, 3}))); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(transpose2d(i[0]))); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(slice(i[0], 1, 1, 2))); }, {a});
  check([](const std::vector<T64>& i) {
    return sum(square(concat(std::vector<T64>{i[0], i[1]}, 0)));
  }, {a, b});
  check([](const std::vector<T64>& i) { return sum(square(layer_norm_axis0(i[0]))); }, {a}, 1e-5);
  check([](const std::vector<T64>& i) { return sum(square(scale(i[0], 1.7))); }, {a});
  check([](const std::vector<T64>& i) { return sum(square(add_const(i[0], 0.3))); }, {a});

  // broadcasting paths
  T64 row = randu({1, 4}, rng), col = randu({3, 1}, rng), scl = randu({}, rng);
  check([](const std::vector<T64>& i) { return sum(square(mul(i[0], i[1]))); }, {a, row});
  check([](const std::vector<T64>& i) { return sum(square(mul(i[0], i[1]))); }, {a, col});
  check([](const std::vector<T64>& i) { return sum(square(add(i[0], i[1]))); }, {a, scl});
  check([](const std::vector<T64>& i) { return sum(square(div(i[0], i[1]))); }, {a, randu({1, 4}, rng, 0.5, 2.0)});
  check([](const std::vector<T64>& i) { return sum(square(sub(i[1], i[0]))); }, {a, col});

  // matmul
  T64 m1 = randu({3, 5}, rng), m2 = randu({5, 2}, rng);
  check([](const std::vector<T64>& i) { return sum(square(matmul(i[0], i[1]))); }, {m1, m2});

  // embedding lookup
  T64 table = randu({4, 6}, rng);
  check([](const std::vector<T64>& i) { return sum(square(gather_row(i[0], 2))); }, {table});

  // interleave
  T64 v1 = randu({5}, rng), v2 = randu({5}, rng);
  check([](const std::vector<T64>& i) { return sum(square(interleave2(i[0], i[1]))); }, {v1, v2});

  // spatial ops
  T64 img = randu({2, 4, 6}, rng);
  T64 klon = randu({2, 3}, rng), klat = randu({2, 3}, rng);
  check([&](const std::vector<T64>& i) {
    return sum(square(conv_lon_circular(i[0], i[1], 1)));
  }, {img, klon});
  check([&](const std::vector<T64>& i) {
    return sum(square(conv_lat_clamped(i[0], i[1], 1)));
  }, {img, klat});
  check([](const std::vector<T64>& i) { return sum(square(avg_pool2d(i[0], 2, 2))); }, {img});
  T64 coarse = randu({2, 2, 3}, rng);
  check([](const std::vector<T64>& i) { return sum(square(upsample_nearest(i[0], 2, 2))); }, {coarse});
}

TEST_CASE("two-layer random network gradient matches finite differences") {
  Rng rng(77);
  T64 w1 = randu({6, 4}, rng, -0.5, 0.5);
  T64 b1 = randu({6, 1}, rng, -0.5, 0.5);
  T64 w2 = randu({1, 6}, rng, -0.5, 0.5);
  T64 x = randu({4, 3}, rng);
  auto f = [&](const std::vector<T64>& in) {
    T64 h = silu(add(matmul(in[0], x), in[1]));
    return mean(square(matmul(in[2], h)));
  };
  CHECK(grad_check(f, {w1, b1, w2}, 1e-5) < 1e-6);
}

TEST_CASE("jvp basics and jvp/backward consistency") {
  // f = sin at 0, tangent 1 -> cos(0) = 1
  auto sino = [](const std::vector<Dual<double>>& d) { return sin(d[0]); };
  auto [y, dy] = jvp<double>(sino, {T64::scalar(0.0)}, {T64::scalar(1.0)});
  CHECK(y.item() == doctest::Approx(0.0));
  CHECK(dy.item() == doctest::Approx(1.0));

  auto sq = [](const std::vector<Dual<double>>& d) { return square(d[0]); };
  auto [y2, dy2] = jvp<double>(sq, {T64::scalar(3.0)}, {T64::scalar(1.0)});
  CHECK(dy2.item() == doctest::Approx(6.0));

  // random small network: jvp tangent vs central differences
  Rng rng(19);
  T64 w1 = randu({5, 4}, rng, -0.7, 0.7);
  T64 w2 = randu({2, 5}, rng, -0.7, 0.7);
  auto net = [&](const std::vector<Dual<double>>& d) {
    return matmul(w2, silu(matmul(w1, d[0])));
  };
  auto net_plain = [&](const T64& x) { return matmul(w2, silu(matmul(w1, x))); };
  T64 x0 = randu({4, 3}, rng);
  T64 v = randu({4, 3}, rng);
  auto [yv, yt] = jvp<double>(net, {x0}, {v});
  const double eps = 1e-6;
  T64 xp = x0.clone(), xm = x0.clone();
  for (std::int64_t i = 0; i < x0.numel(); ++i) {
    xp.data()[i] += eps * v.data()[i];
    xm.data()[i] -= eps * v.data()[i];
  }
  T64 fd = scale(sub(net_plain(xp), net_plain(xm)), 1.0 / (2 * eps));
  for (std::int64_t i = 0; i < fd.numel(); ++i) {
    const double rel = std::fabs(fd.data()[i] - yt.data()[i]) /
                       (std::fabs(fd.data()[i]) + std::fabs(yt.data()[i]) + 1e-12);
    CHECK(rel < 1e-4);
  }

  // <grad f, v> == jvp tangent for scalar f
  auto scalar_net = [&](const std::vector<Dual<double>>& d) {
    return mean(square(matmul(w2, silu(matmul(w1, d[0])))));
  };
  auto [sv, st] = jvp<double>(scalar_net, {x0}, {v});
  (void)sv;
  Tape<double> tape;
  T64 xl = tape.leaf(x0);
  auto g = tape.backward(mean(square(matmul(w2, silu(matmul(w1, xl))))));
  const double inner = kernels::table<double>().dot(g.at(xl).data(), v.data(), v.numel());
  CHECK(st.item() == doctest::Approx(inner).epsilon(1e-6));
}

TEST_CASE("tape replay determinism: same seed, bit-identical gradients") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    T64 w = randu({4, 4}, rng);
    T64 x = randu({4, 2}, rng);
    Tape<double> tape;
    T64 wl = tape.leaf(w);
    auto g = tape.backward(sum(square(silu(matmul(wl, x)))));
    return g.at(wl).vec();
  };
  CHECK(run(123) == run(123));
  CHECK(run(123) != run(124));
}

TEST_CASE("contract errors name the op and reject bad usage") {
  T64 a = T64::zeros({2, 3});
  T64 b = T64::zeros({4});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), TensorError);
  CHECK_THROWS_WITH_AS(matmul(a, a), doctest::Contains("matmul"), TensorError);

  Tape<double> tape;
  T64 x = tape.leaf(T64::from({2}, {1, 2}));
  CHECK_THROWS_AS((void)tape.backward(x), TensorError);  // loss not scalar

  Tape<double> t2;
  T64 y = t2.leaf(T64::scalar(2.0));
  (void)t2.backward(square(y));
  CHECK(t2.frozen());
  CHECK_THROWS_AS((void)square(y), TensorError);  // frozen tape rejects recording

  Tape<double> t3;
  T64 z = T64::scalar(1.0);  // never recorded on t3
  CHECK_THROWS_AS((void)t3.backward(z), TensorError);

  debug_checks() = true;
  T64 neg1 = T64::from({1}, {-1.0});
  CHECK_THROWS_WITH_AS((void)gridcast::log(neg1), doctest::Contains("log"), TensorError);
  debug_checks() = false;
}

TEST_CASE("maximum ties route gradient to the first operand; abs tie gives 0") {
  Tape<double> tape;
  T64 a = tape.leaf(T64::from({2}, {1.0, 0.0}));
  T64 b = tape.leaf(T64::from({2}, {1.0, 2.0}));
  auto g = tape.backward(sum(maximum(a, b)));
  CHECK(g.at(a).vec() == std::vector<double>{1, 0});
  CHECK(g.at(b).vec() == std::vector<double>{0, 1});

  Tape<double> t2;
  T64 x = t2.leaf(T64::from({3}, {-2.0, 0.0, 3.0}));
  auto g2 = t2.backward(sum(abs(x)));
  CHECK(g2.at(x).vec() == std::vector<double>{-1, 0, 1});
}

TEST_CASE("float engine works end to end") {
  using T32 = Tensor<float>;
  Rng rng(4);
  T32 w = T32::randn({8, 8}, rng, 0.1f);
  T32 x = T32::randn({8, 4}, rng);
  Tape<float> tape;
  T32 wl = tape.leaf(w);
  T32 loss = mean(square(matmul(wl, x)));
  auto g = tape.backward(loss);
  CHECK(g.has(wl));
  CHECK(g.at(wl).numel() == 64);
  CHECK(std::isfinite(loss.item()));
}
