#pragma once

// The registered gradient-integrity checks: every trainable objective on a
// 4x8-grid micro configuration, verified in 64-bit against central finite
// differences. Shared by the gradcheck command and the acceptance suite.
// Fixture seeds are pinned for finite-difference conditioning (see the tests
// for the eps-scaling analysis).

#include <string>
#include <vector>

#include "gridcast/finetune.hpp"
#include "gridcast/gradcheck.hpp"
#include "gridcast/network.hpp"
#include "gridcast/objectives.hpp"

namespace gridcast {

struct GradcheckReport {
  std::string name;
  double error = 0;
  double tol = 0;
  bool pass = false;
};

inline std::vector<GradcheckReport> run_gradcheck_suite() {
  using T64 = Tensor<double>;
  std::vector<GradcheckReport> out;
  auto push = [&](const std::string& name, double err, double tol) {
    out.push_back({name, err, tol, err < tol});
  };

  DenoiserConfig cfg;
  cfg.n_lat = 4;
  cfg.n_lon = 8;
  cfg.n_vars = 2;
  cfg.n_forcings = 1;
  cfg.hidden_dim = 12;
  cfg.n_blocks = 1;
  cfg.embed_dim = 16;
  cfg.sin_features = 8;
  cfg.kernel_width = 3;
  TrigFlowSchedule sched;
  LossWeights weights = make_loss_weights(cfg.n_vars, 1, cfg.n_lat, 0.1, 0.05);

  Rng rng(4);
  auto params = init_params<double>(cfg, rng);
  for (auto& b : params.blocks)
    for (auto* t : {&b.mod1_w, &b.mod1_b, &b.mod2_w, &b.mod2_b})
      for (auto& v : t->vec()) v = rng.uniform(-0.1, 0.1);
  T64 x_cond = T64::randn({cfg.n_vars, cfg.n_lat, cfg.n_lon}, rng);
  T64 forcings = T64::randn({cfg.n_forcings, cfg.n_lat, cfg.n_lon}, rng);
  T64 x0 = T64::randn({cfg.n_vars, cfg.n_lat, cfg.n_lon}, rng);
  Rng zrng(4007);
  T64 z = sched.noise_field<double>(x0.shape, zrng);
  const double t = 1.0;

  // diffusion loss
  {
    auto f = [&](const std::vector<T64>& leaves) {
      DenoiserParams<double> q = params;
      q.enc_w = leaves[0];
      auto fn = denoiser_fn(q, x_cond, forcings, 1);
      return diffusion_loss_at(sched, fn, x0, z, t, weights).loss;
    };
    push("diffusion_loss/enc_w", grad_check(f, {params.enc_w.clone()}, 1e-3), 1e-4);
  }

  // consistency loss over the warmup range
  for (double r : {0.0, 0.5, 1.0}) {
    auto det = denoiser_fn(params, x_cond, forcings, 1);
    for (int fam = 0; fam < 2; ++fam) {
      auto f = [&](const std::vector<T64>& leaves) {
        DenoiserParams<double> q = params;
        if (fam == 0) q.blocks[0].w_gate = leaves[0];
        else q.enc_w = leaves[0];
        auto live = denoiser_fn(q, x_cond, forcings, 1);
        return consistency_loss_at(sched, live, det, x0, z, t, weights, r).loss;
      };
      T64 base = fam == 0 ? params.blocks[0].w_gate : params.enc_w;
      push("consistency_loss/r=" + std::to_string(r) + (fam == 0 ? "/w_gate" : "/enc_w"),
           grad_check(f, {base.clone()}, 1e-3), 1e-4);
    }
  }

  // CRPS finetune loss at K=2. The fixture uses a larger init scale so the
  // two members separate well past the finite-difference step; near-identical
  // members would put the |.| terms of the fair CRPS at their kinks.
  {
    DenoiserConfig fcfg = cfg;
    fcfg.init_std = 0.1;
    Rng frng(4);
    auto fparams = init_params<double>(fcfg, frng);
    for (auto& b : fparams.blocks)
      for (auto* tt : {&b.mod1_w, &b.mod1_b, &b.mod2_w, &b.mod2_b})
        for (auto& v : tt->vec()) v = frng.uniform(-0.1, 0.1);

    NormStats stats;
    stats.full_mean = {0.1, -0.2};
    stats.full_std = {1.3, 0.8};
    stats.deltas = {1, 2, 4};
    for (int i = 0; i < 3; ++i) {
      stats.res_mean.push_back({0.01, -0.02});
      stats.res_std.push_back({0.5, 0.7});
    }
    ElementData<double> el;
    Rng drng(104);
    el.init_state = T64::randn({2, 4, 8}, drng);
    for (int k = 0; k < 2; ++k) {
      el.truth.push_back(T64::randn({2, 4, 8}, drng));
      el.forcings.push_back(T64::randn({1, 4, 8}, drng));
    }
    const std::uint64_t eseed = 9;
    for (int fam = 0; fam < 2; ++fam) {
      auto f = [&](const std::vector<T64>& leaves) {
        DenoiserParams<double> q = fparams;
        if (fam == 0) q.dec_w = leaves[0];
        else q.enc_w = leaves[0];
        return finetune_loss_fullgraph(sched, q, stats, el, 0, 2, eseed, weights);
      };
      T64 base = fam == 0 ? fparams.dec_w : fparams.enc_w;
      push(std::string("crps_finetune_k2/") + (fam == 0 ? "dec_w" : "enc_w"),
           grad_check(f, {base.clone()}, 1e-3), 1e-4);
    }
  }

  return out;
}

}  // namespace gridcast
