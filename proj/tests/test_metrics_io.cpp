#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "gridcast/checkpoint.hpp"
#include "gridcast/container.hpp"
#include "gridcast/metrics.hpp"
#include "gridcast/scorecard.hpp"

using namespace gridcast;

namespace {

using T32 = Tensor<float>;

EnsembleForecast make_ens(std::int64_t members, std::int64_t steps, std::int64_t v,
                          std::int64_t h, std::int64_t w) {
  EnsembleForecast e;
  e.n_members = members;
  e.n_steps = steps;
  e.n_vars = v;
  e.n_lat = h;
  e.n_lon = w;
  e.fields.assign(static_cast<std::size_t>(members * steps * v * h * w), 0.0f);
  for (std::int64_t m = 0; m < members; ++m) e.member_seeds.push_back(100 + m);
  return e;
}

std::string tmp_path(const std::string& name) { return "/tmp/gridcast_test_" + name; }

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rmse: zero error, uniform error, unweighted cross-check") {
  auto e = make_ens(3, 2, 2, 4, 6);
  Rng rng(3);
  TruthSeq truth;
  for (int k = 0; k < 2; ++k) truth.push_back(T32::randn({2, 4, 6}, rng));
  for (std::int64_t m = 0; m < 3; ++m)
    for (std::int64_t k = 0; k < 2; ++k)
      std::copy_n(truth[k].data(), e.field_numel(), e.at(m, k));

  auto r0 = rmse_latweighted(e, truth);
  for (const auto& row : r0)
    for (double v : row) CHECK(v == 0.0);

  // uniform error of magnitude 0.5 scores exactly 0.5 (weights have mean 1)
  for (std::int64_t m = 0; m < 3; ++m)
    for (std::int64_t k = 0; k < 2; ++k)
      for (std::int64_t i = 0; i < e.field_numel(); ++i) e.at(m, k)[i] += 0.5f;
  auto r1 = rmse_latweighted(e, truth);
  for (const auto& row : r1)
    for (double v : row) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));

  // single-row grid: weight is exactly 1, compare against the plain formula
  auto e2 = make_ens(2, 1, 1, 1, 8);
  TruthSeq t2{T32::randn({1, 1, 8}, rng)};
  Rng rng2(9);
  for (std::int64_t m = 0; m < 2; ++m)
    for (std::int64_t i = 0; i < 8; ++i) e2.at(m, 0)[i] = static_cast<float>(rng2.uniform(-1, 1));
  auto r2 = rmse_latweighted(e2, t2);
  double direct = 0;
  for (std::int64_t i = 0; i < 8; ++i) {
    const double mean = 0.5 * (e2.at(0, 0)[i] + e2.at(1, 0)[i]);
    direct += std::pow(mean - t2[0].data()[i], 2);
  }
  CHECK(r2[0][0] == doctest::Approx(std::sqrt(direct / 8)).epsilon(1e-6));
}

TEST_CASE("crps score: zero at truth, hand case, member permutation invariance") {
  auto e = make_ens(2, 1, 1, 1, 4);
  TruthSeq truth{T32::full({1, 1, 4}, 5.0f)};
  for (std::int64_t i = 0; i < 4; ++i) {
    e.at(0, 0)[i] = 0.0f;
    e.at(1, 0)[i] = 2.0f;
  }
  auto c = crps_score(e, truth);
  CHECK(c[0][0] == doctest::Approx(3.0).epsilon(1e-9));  // matches the scalar hand case

  // swap members
  auto e2 = e;
  for (std::int64_t i = 0; i < 4; ++i) {
    e2.at(0, 0)[i] = 2.0f;
    e2.at(1, 0)[i] = 0.0f;
  }
  auto c2 = crps_score(e2, truth);
  CHECK(c[0][0] == c2[0][0]);

  for (std::int64_t i = 0; i < 4; ++i) {
    e.at(0, 0)[i] = 5.0f;
    e.at(1, 0)[i] = 5.0f;
  }
  CHECK(crps_score(e, truth)[0][0] == 0.0);

  auto singleton = make_ens(1, 1, 1, 1, 4);
  CHECK_THROWS_AS((void)crps_score(singleton, truth), TensorError);
}

TEST_CASE("ssr: zero spread, homogeneity, exchangeable-truth calibration") {
  Rng rng(5);
  // identical members -> SSR 0
  {
    auto e = make_ens(4, 1, 1, 2, 4);
    TruthSeq truth{T32::randn({1, 2, 4}, rng)};
    for (std::int64_t m = 0; m < 4; ++m)
      for (std::int64_t i = 0; i < 8; ++i) e.at(m, 0)[i] = 1.0f;
    auto tab = ssr(e, truth);
    CHECK(tab.corrected[0][0] == 0.0);
  }

  // doubling all fields leaves SSR unchanged
  {
    auto e = make_ens(4, 1, 1, 2, 4);
    TruthSeq truth{T32::randn({1, 2, 4}, rng)};
    for (std::int64_t m = 0; m < 4; ++m)
      for (std::int64_t i = 0; i < 8; ++i) e.at(m, 0)[i] = static_cast<float>(rng.uniform(-1, 1));
    auto t1 = ssr(e, truth);
    auto e2 = e;
    TruthSeq truth2{scale(truth[0], 2.0f)};
    for (std::int64_t m = 0; m < 4; ++m)
      for (std::int64_t i = 0; i < 8; ++i) e2.at(m, 0)[i] *= 2.0f;
    auto t2 = ssr(e2, truth2);
    CHECK(t1.corrected[0][0] == doctest::Approx(t2.corrected[0][0]).epsilon(1e-7));
  }

  // truth drawn as one extra exchangeable member: corrected SSR -> 1
  {
    const int trials = 10000;
    const std::int64_t N = 8;
    double acc = 0;
    Rng r(2718);
    for (int trial = 0; trial < trials; ++trial) {
      auto e = make_ens(N, 1, 1, 4, 8);
      TruthSeq truth{T32::zeros({1, 4, 8})};
      for (std::int64_t i = 0; i < 32; ++i) {
        for (std::int64_t m = 0; m < N; ++m) e.at(m, 0)[i] = static_cast<float>(r.normal());
        truth[0].data()[i] = static_cast<float>(r.normal());
      }
      acc += ssr(e, truth).corrected[0][0];
    }
    CHECK(std::fabs(acc / trials - 1.0) < 0.05);
  }
}

TEST_CASE("power spectrum: Fourier identity, constant field, Parseval") {
  const std::int64_t H = 6, W = 16;
  T32 field = T32::zeros({1, H, W});
  for (std::int64_t la = 0; la < H; ++la)
    for (std::int64_t lo = 0; lo < W; ++lo)
      field.data()[la * W + lo] = static_cast<float>(std::cos(2 * kPi * 3 * lo / W));
  auto spec = power_spectrum_field(field);
  for (std::size_t k = 0; k < spec[0].size(); ++k) {
    if (k == 3) CHECK(spec[0][k] > 1e-6);
    else CHECK(spec[0][k] < 1e-10);
  }

  T32 constant = T32::full({1, H, W}, 2.5f);
  auto spec_c = power_spectrum_field(constant);
  CHECK(spec_c[0][0] == doctest::Approx(2.5 * 2.5 * W).epsilon(1e-9));
  for (std::size_t k = 1; k < spec_c[0].size(); ++k) CHECK(spec_c[0][k] < 1e-9);

  // Parseval: sum_k power == lat-weighted spatial sum of squares
  Rng rng(11);
  T32 rnd = T32::randn({2, H, W}, rng);
  auto spec_r = power_spectrum_field(rnd);
  auto w = metric_lat_weights(H);
  for (std::int64_t v = 0; v < 2; ++v) {
    double total = 0;
    for (double p : spec_r[static_cast<std::size_t>(v)]) total += p;
    double direct = 0;
    for (std::int64_t la = 0; la < H; ++la) {
      double row = 0;
      for (std::int64_t lo = 0; lo < W; ++lo)
        row += std::pow(rnd.data()[(v * H + la) * W + lo], 2);
      direct += w[static_cast<std::size_t>(la)] * row / H;
    }
    CHECK(std::fabs(total - direct) / direct < 1e-6);
  }
}

TEST_CASE("hovmoller: climatology zeroing, single-row band, advection ridges") {
  MiniAtmosConfig cfg;
  cfg.n_lat = 8;
  cfg.n_lon = 16;
  cfg.n_vars = 4;
  // training split covers exactly three full advection periods, so the
  // climatology is zonally uniform and anomalies shift cleanly
  cfg.n_ticks = 60;
  cfg.train_frac = 0.8;
  cfg.spinup_ticks = 0;
  cfg.substeps = 1;
  cfg.advect_lon.assign(4, 1.0 / cfg.tick_dt);  // one cell per tick
  cfg.advect_lat.assign(4, 0.0);
  cfg.diffusion.assign(4, 0.0);
  cfg.coupling = 0.0;
  cfg.seasonal_amp = 0.0;
  cfg.diurnal_amp = 0.0;
  cfg.oro_amp = 0.0;
  auto data = simulate(cfg);
  Climatology clim = compute_climatology(data);

  // states equal to climatology give an all-zero diagram
  std::vector<Tensor<float>> clim_states;
  for (int t = 0; t < 4; ++t) {
    Tensor<float> s = Tensor<float>::zeros({4, 8, 16});
    std::copy_n(clim.mean_field.data(), s.numel(), s.data());
    clim_states.push_back(std::move(s));
  }
  auto zero_d = hovmoller(clim_states, 0, 3, 5, clim);
  for (const auto& row : zero_d)
    for (double v : row) CHECK(std::fabs(v) < 1e-6);

  // single-row band equals that row's anomaly series
  std::vector<Tensor<float>> traj;
  for (int t = 0; t < 10; ++t) traj.push_back(data.state_at(t));
  auto one_row = hovmoller(traj, 1, 4, 5, clim);
  for (int t = 0; t < 10; ++t)
    for (std::int64_t lo = 0; lo < 16; ++lo) {
      const double direct = traj[t].data()[(1 * 8 + 4) * 16 + lo] -
                            clim.mean_field[(1 * 8 + 4) * 16 + lo];
      CHECK(one_row[t][static_cast<std::size_t>(lo)] == doctest::Approx(direct).epsilon(1e-6));
    }

  // eastward advection: the diagram shifts by one cell per tick
  auto ridge = hovmoller(traj, 0, 2, 6, clim);
  for (int t = 0; t + 1 < 10; ++t)
    for (std::int64_t lo = 0; lo < 16; ++lo)
      CHECK(ridge[t + 1][static_cast<std::size_t>((lo + 1) % 16)] ==
            doctest::Approx(ridge[t][static_cast<std::size_t>(lo)]).epsilon(5e-4));

  CHECK_THROWS_AS((void)hovmoller(traj, 0, 5, 5, clim), TensorError);  // empty band
}

TEST_CASE("container round trips are bit-exact, corruption is detected") {
  MiniAtmosConfig cfg;
  cfg.n_lat = 8;
  cfg.n_lon = 16;
  cfg.n_vars = 4;
  cfg.n_ticks = 50;
  cfg.spinup_ticks = 10;
  auto data = make_dataset(cfg);

  const std::string p1 = tmp_path("dataset.bin"), p2 = tmp_path("dataset2.bin");
  save_dataset(p1, data);
  auto loaded = load_dataset(p1);
  CHECK(loaded.states == data.states);
  CHECK(loaded.orography == data.orography);
  CHECK(loaded.land_mask == data.land_mask);
  CHECK(loaded.stats.full_mean == data.stats.full_mean);
  CHECK(loaded.stats.res_std == data.stats.res_std);
  CHECK(loaded.train.begin == data.train.begin);
  CHECK(loaded.test.end == data.test.end);

  // save -> load -> save produces byte-identical files
  save_dataset(p2, loaded);
  CHECK(file_bytes(p1) == file_bytes(p2));

  // truncated payload is a checksum/length error, not a crash
  {
    const std::string full = file_bytes(p1);
    std::ofstream out(tmp_path("trunc.bin"), std::ios::binary | std::ios::trunc);
    out.write(full.data(), static_cast<std::streamsize>(full.size() - 257));
    out.close();
    CHECK_THROWS_WITH_AS((void)read_container(tmp_path("trunc.bin")),
                         doctest::Contains("truncated"), TensorError);
  }

  // flipped byte in the payload fails the checksum
  {
    std::string full = file_bytes(p1);
    full[full.size() - 100] = static_cast<char>(full[full.size() - 100] ^ 0x40);
    std::ofstream out(tmp_path("corrupt.bin"), std::ios::binary | std::ios::trunc);
    out.write(full.data(), static_cast<std::streamsize>(full.size()));
    out.close();
    CHECK_THROWS_WITH_AS((void)read_container(tmp_path("corrupt.bin")),
                         doctest::Contains("checksum"), TensorError);
  }

  // wrong magic
  {
    std::ofstream out(tmp_path("magic.bin"), std::ios::binary | std::ios::trunc);
    out << "not-a-container 1\n";
    out.close();
    CHECK_THROWS_WITH_AS((void)read_container(tmp_path("magic.bin")),
                         doctest::Contains("magic"), TensorError);
  }
}

TEST_CASE("forecast and checkpoint containers round trip") {
  auto e = make_ens(2, 3, 2, 4, 8);
  Rng rng(3);
  for (auto& v : e.fields) v = static_cast<float>(rng.uniform(-1, 1));
  e.delta = 2;
  e.delta_index = 1;
  e.init_time = 17;
  e.base_seed = 99;
  e.nfe_total = 6;
  const std::string p = tmp_path("forecast.bin");
  save_forecast(p, e);
  auto le = load_forecast(p);
  CHECK(le.fields == e.fields);
  CHECK(le.member_seeds == e.member_seeds);
  CHECK(le.delta == 2);
  CHECK(le.nfe_total == 6);

  // checkpoint
  RunConfig cfg;
  cfg.network.n_lat = 4;
  cfg.network.n_lon = 8;
  cfg.network.n_vars = 2;
  cfg.network.n_forcings = 3;
  cfg.network.hidden_dim = 8;
  cfg.network.n_blocks = 1;
  cfg.network.embed_dim = 8;
  cfg.network.sin_features = 4;
  cfg.network.kernel_width = 3;
  TrainerState st;
  st.phase = "diffusion";
  st.images_seen = 1234;
  Rng ri(5);
  st.model = init_denoiser<float>(cfg.network, ri);
  // fabricate optimizer state aligned with the traversal
  st.model.params.for_each([&](const char*, const Tensor<float>& t, ParamKind) {
    st.adam_m.push_back(Tensor<float>::randn(t.shape, ri, 0.1f));
    st.adam_v.push_back(Tensor<float>::randn(t.shape, ri, 0.1f));
  });
  st.adam_steps = 55;

  const std::string cp1 = tmp_path("ckpt.bin"), cp2 = tmp_path("ckpt2.bin");
  save_checkpoint(cp1, cfg, st);
  RunConfig cfg2;
  TrainerState st2 = load_checkpoint(cp1, &cfg2);
  CHECK(st2.phase == "diffusion");
  CHECK(st2.images_seen == 1234);
  CHECK(st2.adam_steps == 55);
  CHECK(cfg2.network.hidden_dim == 8);

  save_checkpoint(cp2, cfg2, st2);
  CHECK(file_bytes(cp1) == file_bytes(cp2));
}

TEST_CASE("scorecard CSV round trips metric values exactly") {
  Scorecard sc;
  sc.leads = {1, 2};
  sc.rmse = {{0.12345678912345, 1.0 / 3.0}, {2e-17, 123456.789}};
  sc.crps = {{0.9999999999999, 1e-30}, {3.14159265358979, 2.718281828459045}};
  sc.ssr = {{0.5, 0.25}, {1.0, 2.0}};
  sc.ssr_uncorrected = sc.ssr;
  sc.spread = sc.rmse;
  const std::string p = tmp_path("scorecard.csv");
  write_scorecard_csv(p, sc);
  auto rows = read_metric_csv(p);
  for (const auto& row : rows) {
    const auto& tab = row.metric == "rmse" ? sc.rmse
                      : row.metric == "crps" ? sc.crps
                      : row.metric == "ssr" ? sc.ssr
                      : row.metric == "ssr_uncorrected" ? sc.ssr_uncorrected
                                                        : sc.spread;
    const double expect = tab[static_cast<std::size_t>(row.variable)]
                             [static_cast<std::size_t>(row.lead - 1)];
    CHECK(row.value == expect);
  }
}
