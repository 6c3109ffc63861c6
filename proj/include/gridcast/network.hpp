#pragma once

// Conditional denoiser for gridded states: residual blocks of adaLN-modulated
// spatial mixing and SwiGLU channel MLPs, conditioned on the noise time and
// the forecast interval through a shared embedding. Modulation projections
// are zero-initialized so every residual branch starts as identity and the
// network is an affine map of its inputs at init.
//
// The forward pass is written once over a generic tensor type: Tensor<T>
// (plain or tape-recorded) for training/inference, Dual<T> for the
// forward-mode derivative along the noise time.

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "gridcast/dual.hpp"
#include "gridcast/ops.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/tape.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

enum class MixingKind { separable_circular_conv, dense_coarse };

struct DenoiserConfig {
  std::int64_t n_lat = 32;
  std::int64_t n_lon = 64;
  std::int64_t n_vars = 6;
  std::int64_t n_forcings = 3;
  std::int64_t hidden_dim = 128;
  std::int64_t n_blocks = 6;
  std::int64_t embed_dim = 64;
  std::int64_t sin_features = 16;  // even; interleaved sin/cos pairs
  std::int64_t mlp_ratio = 2;
  std::int64_t kernel_width = 5;  // odd
  std::int64_t coarse_factor = 4;
  std::int64_t n_deltas = 3;
  MixingKind mixing = MixingKind::separable_circular_conv;
  double min_period = 1e-2;  // sinusoidal embedding frequency ladder
  double max_period = 1e3;
  double ln_eps = 1e-5;
  double init_std = 0.02;

  std::int64_t in_channels() const { return 2 * n_vars + n_forcings; }
  std::int64_t mlp_dim() const { return hidden_dim * mlp_ratio; }
  std::int64_t coarse_cells() const {
    return (n_lat / coarse_factor) * (n_lon / coarse_factor);
  }

  void validate() const {
    if (n_lat <= 0 || n_lon <= 0 || n_vars <= 0 || n_forcings < 0 || hidden_dim <= 0 ||
        n_blocks <= 0 || embed_dim <= 0 || n_deltas <= 0)
      contract_error("denoiser config: nonpositive extent");
    if (sin_features % 2 != 0 || sin_features < 2)
      contract_error("denoiser config: sin_features must be even and >= 2");
    if (kernel_width % 2 != 1) contract_error("denoiser config: kernel_width must be odd");
    if (mixing == MixingKind::dense_coarse &&
        (n_lat % coarse_factor != 0 || n_lon % coarse_factor != 0))
      contract_error("denoiser config: grid not divisible by coarse_factor");
    if (!(min_period > 0 && min_period < max_period))
      contract_error("denoiser config: need 0 < min_period < max_period");
  }

  // Closed-form parameter count; guards architecture drift.
  std::int64_t param_count() const {
    const std::int64_t C = hidden_dim, E = embed_dim, M = mlp_dim(), K = kernel_width;
    std::int64_t n = 0;
    n += C * in_channels() + C;               // encoder
    n += E * sin_features + E;                // sinusoidal projection
    n += n_deltas * E;                        // delta embedding table
    n += 2 * (E * E + E);                     // two embedding MLP layers
    std::int64_t per_block = 2 * (3 * C * E + 3 * C);  // two modulation triplets
    if (mixing == MixingKind::separable_circular_conv) {
      per_block += 2 * C * K;  // lon + lat depthwise kernels
    } else {
      per_block += coarse_cells() * coarse_cells();
    }
    per_block += C * C + C;                   // pointwise mix
    per_block += 2 * (M * C + M) + C * M + C;  // SwiGLU gate/up/down
    n += n_blocks * per_block;
    n += n_vars * C + n_vars;                 // decoder
    return n;
  }
};

// io_matrix marks the encoder/decoder projections: like embeddings and conv
// taps they take adaptive (AdamW) updates rather than Muon's constant-norm
// orthogonalized steps, matching published Muon usage for input/output layers.
enum class ParamKind { matrix, io_matrix, kernel, bias, modulation, modulation_bias, embedding };

inline bool muon_eligible(ParamKind k) {
  return k == ParamKind::matrix || k == ParamKind::modulation;
}
inline bool decays(ParamKind k) {
  return k != ParamKind::modulation && k != ParamKind::modulation_bias;
}

template <typename T>
struct BlockParams {
  Tensor<T> mod1_w, mod1_b;
  Tensor<T> k_lon, k_lat;    // separable mixing
  Tensor<T> mix_dense;       // dense-coarse mixing
  Tensor<T> pw_w, pw_b;
  Tensor<T> mod2_w, mod2_b;
  Tensor<T> w_gate, b_gate, w_up, b_up, w_down, b_down;
};

template <typename T>
struct DenoiserParams {
  DenoiserConfig cfg;
  Tensor<T> enc_w, enc_b;
  Tensor<T> sin_w, sin_b;
  Tensor<T> delta_table;
  Tensor<T> mlp1_w, mlp1_b, mlp2_w, mlp2_b;
  std::vector<BlockParams<T>> blocks;
  Tensor<T> dec_w, dec_b;

  // Fixed traversal order; serialization, optimizer state, and EMA all key
  // off this order.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("enc_w", self.enc_w, ParamKind::io_matrix);
    fn("enc_b", self.enc_b, ParamKind::bias);
    fn("sin_w", self.sin_w, ParamKind::matrix);
    fn("sin_b", self.sin_b, ParamKind::bias);
    fn("delta_table", self.delta_table, ParamKind::embedding);
    fn("mlp1_w", self.mlp1_w, ParamKind::matrix);
    fn("mlp1_b", self.mlp1_b, ParamKind::bias);
    fn("mlp2_w", self.mlp2_w, ParamKind::matrix);
    fn("mlp2_b", self.mlp2_b, ParamKind::bias);
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      auto& blk = self.blocks[b];
      const std::string p = "blocks." + std::to_string(b) + ".";
      fn((p + "mod1_w").c_str(), blk.mod1_w, ParamKind::modulation);
      fn((p + "mod1_b").c_str(), blk.mod1_b, ParamKind::modulation_bias);
      if (self.cfg.mixing == MixingKind::separable_circular_conv) {
        fn((p + "k_lon").c_str(), blk.k_lon, ParamKind::kernel);
        fn((p + "k_lat").c_str(), blk.k_lat, ParamKind::kernel);
      } else {
        fn((p + "mix_dense").c_str(), blk.mix_dense, ParamKind::matrix);
      }
      fn((p + "pw_w").c_str(), blk.pw_w, ParamKind::matrix);
      fn((p + "pw_b").c_str(), blk.pw_b, ParamKind::bias);
      fn((p + "mod2_w").c_str(), blk.mod2_w, ParamKind::modulation);
      fn((p + "mod2_b").c_str(), blk.mod2_b, ParamKind::modulation_bias);
      fn((p + "w_gate").c_str(), blk.w_gate, ParamKind::matrix);
      fn((p + "b_gate").c_str(), blk.b_gate, ParamKind::bias);
      fn((p + "w_up").c_str(), blk.w_up, ParamKind::matrix);
      fn((p + "b_up").c_str(), blk.b_up, ParamKind::bias);
      fn((p + "w_down").c_str(), blk.w_down, ParamKind::matrix);
      fn((p + "b_down").c_str(), blk.b_down, ParamKind::bias);
    }
    fn("dec_w", self.dec_w, ParamKind::io_matrix);
    fn("dec_b", self.dec_b, ParamKind::bias);
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for_each([&](const char*, const Tensor<T>& t, ParamKind) { n += t.numel(); });
    return n;
  }

  DenoiserParams clone() const {
    DenoiserParams out = *this;
    out.for_each([](const char*, Tensor<T>& t, ParamKind) { t = t.clone(); });
    return out;
  }

  // Bind every parameter to a recording tape as a watched leaf.
  DenoiserParams watched(Tape<T>& tape) const {
    DenoiserParams out = *this;
    out.for_each([&](const char*, Tensor<T>& t, ParamKind) { t = tape.leaf(t); });
    return out;
  }

  DenoiserParams detached() const {
    DenoiserParams out = *this;
    out.for_each([](const char*, Tensor<T>& t, ParamKind) { t = t.detach(); });
    return out;
  }
};

// Truncated normal (resampled beyond +-2 sigma) with the variance correction
// so the sample standard deviation matches `std` rather than 0.8796 std.
template <typename T>
T sample_trunc_normal(Rng& rng, double std) {
  double u;
  do {
    u = rng.normal();
  } while (std::fabs(u) > 2.0);
  return static_cast<T>(u * (std / 0.87962566103423978));
}

template <typename T>
DenoiserParams<T> init_params(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::int64_t C = cfg.hidden_dim, E = cfg.embed_dim, M = cfg.mlp_dim(),
                     K = cfg.kernel_width;
  DenoiserParams<T> p;
  p.cfg = cfg;
  p.enc_w = Tensor<T>::zeros({C, cfg.in_channels()});
  p.enc_b = Tensor<T>::zeros({C});
  p.sin_w = Tensor<T>::zeros({E, cfg.sin_features});
  p.sin_b = Tensor<T>::zeros({E});
  p.delta_table = Tensor<T>::zeros({cfg.n_deltas, E});
  p.mlp1_w = Tensor<T>::zeros({E, E});
  p.mlp1_b = Tensor<T>::zeros({E});
  p.mlp2_w = Tensor<T>::zeros({E, E});
  p.mlp2_b = Tensor<T>::zeros({E});
  p.blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
  for (auto& b : p.blocks) {
    b.mod1_w = Tensor<T>::zeros({3 * C, E});
    b.mod1_b = Tensor<T>::zeros({3 * C});
    if (cfg.mixing == MixingKind::separable_circular_conv) {
      b.k_lon = Tensor<T>::zeros({C, K});
      b.k_lat = Tensor<T>::zeros({C, K});
    } else {
      b.mix_dense = Tensor<T>::zeros({cfg.coarse_cells(), cfg.coarse_cells()});
    }
    b.pw_w = Tensor<T>::zeros({C, C});
    b.pw_b = Tensor<T>::zeros({C});
    b.mod2_w = Tensor<T>::zeros({3 * C, E});
    b.mod2_b = Tensor<T>::zeros({3 * C});
    b.w_gate = Tensor<T>::zeros({M, C});
    b.b_gate = Tensor<T>::zeros({M});
    b.w_up = Tensor<T>::zeros({M, C});
    b.b_up = Tensor<T>::zeros({M});
    b.w_down = Tensor<T>::zeros({C, M});
    b.b_down = Tensor<T>::zeros({C});
  }
  p.dec_w = Tensor<T>::zeros({cfg.n_vars, C});
  p.dec_b = Tensor<T>::zeros({cfg.n_vars});

  // modulation projections and all biases stay exactly zero
  p.for_each([&](const char*, Tensor<T>& t, ParamKind kind) {
    if (kind == ParamKind::bias || kind == ParamKind::modulation ||
        kind == ParamKind::modulation_bias)
      return;
    for (auto& v : t.vec()) v = sample_trunc_normal<T>(rng, cfg.init_std);
  });
  return p;
}

template <typename T>
struct Denoiser {
  DenoiserParams<T> params;
  DenoiserParams<T> ema;  // shadow used at inference
};

template <typename T>
Denoiser<T> init_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  Denoiser<T> d;
  d.params = init_params<T>(cfg, rng);
  d.ema = d.params.clone();
  return d;
}

// ----------------------------------------------------------- conditioning

// Geometric ladder of angular frequencies spanning [min_period, max_period].
template <typename T>
Tensor<T> frequency_ladder(const DenoiserConfig& cfg) {
  const std::int64_t n = cfg.sin_features / 2;
  Tensor<T> f = Tensor<T>::zeros({n});
  for (std::int64_t i = 0; i < n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    const double period = cfg.max_period * std::pow(cfg.min_period / cfg.max_period, frac);
    f.data()[i] = static_cast<T>(2.0 * kPi / period);
  }
  return f;
}

// Interleaved (sin, cos) features of a scalar time.
template <typename T, typename TimeT>
TimeT sinusoidal_features(const DenoiserConfig& cfg, const TimeT& t) {
  Tensor<T> freqs = frequency_ladder<T>(cfg);
  TimeT phases = mul(freqs, t);  // broadcast rank-0 time over the ladder
  return interleave2(sin(phases), cos(phases));
}

// Condition embedding from (noise time, delta index): sinusoidal features of
// t projected, summed with the learned delta embedding, then two silu layers.
template <typename T, typename TimeT>
TimeT embed_condition(const DenoiserParams<T>& p, const TimeT& t, std::int64_t delta_index) {
  const DenoiserConfig& cfg = p.cfg;
  if (delta_index < 0 || delta_index >= cfg.n_deltas)
    contract_error("embed_condition: unknown delta index " + std::to_string(delta_index));
  TimeT feats = sinusoidal_features<T>(cfg, t);
  TimeT e = add(matmul(p.sin_w, reshape(feats, {cfg.sin_features, 1})),
                reshape(p.sin_b, {cfg.embed_dim, 1}));
  e = add(e, reshape(gather_row(p.delta_table, delta_index), {cfg.embed_dim, 1}));
  e = silu(add(matmul(p.mlp1_w, e), reshape(p.mlp1_b, {cfg.embed_dim, 1})));
  e = silu(add(matmul(p.mlp2_w, e), reshape(p.mlp2_b, {cfg.embed_dim, 1})));
  return e;  // [embed_dim, 1]
}

// ---------------------------------------------------------------- forward

namespace detail {

template <typename T>
Tensor<T> promote_like(const Tensor<T>&, const Tensor<T>& x) {
  return x;
}
template <typename T>
Dual<T> promote_like(const Dual<T>&, const Tensor<T>& x) {
  return Dual<T>::constant(x);
}

template <typename T>
void block_finite_check(const Tensor<T>& h, std::size_t block) {
  if (!h.all_finite())
    contract_error("denoiser: non-finite activations in block " + std::to_string(block));
}
template <typename T>
void block_finite_check(const Dual<T>& h, std::size_t block) {
  if (!h.v.all_finite() || !h.t.all_finite())
    contract_error("denoiser: non-finite activations in block " + std::to_string(block));
}

// channels-first per-cell linear: W [Cout, Cin] applied over [Cin, H, W]
template <typename TT, typename T>
TT cellwise_linear(const Tensor<T>& w, const Tensor<T>& b, const TT& x, std::int64_t h,
                   std::int64_t wd) {
  TT flat = reshape(x, {-1, h * wd});
  TT y = add(matmul(w, flat), reshape(b, {b.shape[0], 1}));
  return reshape(y, {w.shape[0], h, wd});
}

}  // namespace detail

// F_theta(x_t / sigma_d, t): the raw network output in standardized space.
// x_over_sigma: [n_vars, H, W]; x_cond: [n_vars, H, W]; forcings: [F, H, W];
// cond: [embed_dim, 1] from embed_condition.
template <typename TT, typename T>
TT denoiser_forward(const DenoiserParams<T>& p, const TT& x_over_sigma, const Tensor<T>& x_cond,
                    const Tensor<T>& forcings, const TT& cond) {
  const DenoiserConfig& cfg = p.cfg;
  const std::int64_t H = cfg.n_lat, W = cfg.n_lon, C = cfg.hidden_dim;

  auto shape_of = [](const TT& x) -> const Shape& {
    if constexpr (std::is_same_v<TT, Tensor<T>>) return x.shape;
    else return x.v.shape;
  };
  if (shape_of(x_over_sigma) != Shape{cfg.n_vars, H, W})
    contract_error("denoiser: noisy input shape " + shape_str(shape_of(x_over_sigma)) +
                   ", expected " + shape_str({cfg.n_vars, H, W}));
  if (x_cond.shape != Shape{cfg.n_vars, H, W})
    contract_error("denoiser: conditional state shape " + shape_str(x_cond.shape));
  if (forcings.shape != Shape{cfg.n_forcings, H, W})
    contract_error("denoiser: forcings shape " + shape_str(forcings.shape));

  std::vector<TT> parts;
  parts.push_back(x_over_sigma);
  parts.push_back(detail::promote_like(x_over_sigma, x_cond));
  parts.push_back(detail::promote_like(x_over_sigma, forcings));
  TT h = concat(parts, 0);
  h = detail::cellwise_linear(p.enc_w, p.enc_b, h, H, W);

  const std::int64_t center = (cfg.kernel_width - 1) / 2;
  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& blk = p.blocks[bi];

    auto modulation = [&](const Tensor<T>& mw, const Tensor<T>& mb) {
      TT m = add(matmul(mw, cond), reshape(mb, {3 * C, 1}));
      TT sc = reshape(slice(m, 0, 0, C), {C, 1, 1});
      TT sh = reshape(slice(m, 0, C, C), {C, 1, 1});
      TT gt = reshape(slice(m, 0, 2 * C, C), {C, 1, 1});
      return std::tuple<TT, TT, TT>(sc, sh, gt);
    };

    // spatial mixing half-block
    {
      auto [sc, sh, gt] = modulation(blk.mod1_w, blk.mod1_b);
      TT hn = layer_norm_axis0(h, static_cast<T>(cfg.ln_eps));
      TT hm = add(mul(hn, add_const(sc, T{1})), sh);
      TT mix;
      if (cfg.mixing == MixingKind::separable_circular_conv) {
        mix = conv_lon_circular(hm, blk.k_lon, center);
        mix = conv_lat_clamped(mix, blk.k_lat, center);
      } else {
        const std::int64_t f = cfg.coarse_factor;
        TT pooled = avg_pool2d(hm, f, f);
        TT flat = reshape(pooled, {C, cfg.coarse_cells()});
        TT mixed = matmul(flat, transpose2d(blk.mix_dense));
        mix = upsample_nearest(reshape(mixed, {C, H / f, W / f}), f, f);
      }
      mix = detail::cellwise_linear(blk.pw_w, blk.pw_b, mix, H, W);
      h = add(h, mul(gt, mix));
    }

    // channel MLP half-block
    {
      auto [sc, sh, gt] = modulation(blk.mod2_w, blk.mod2_b);
      TT hn = layer_norm_axis0(h, static_cast<T>(cfg.ln_eps));
      TT hm = add(mul(hn, add_const(sc, T{1})), sh);
      TT flat = reshape(hm, {C, H * W});
      TT u = add(matmul(blk.w_gate, flat), reshape(blk.b_gate, {cfg.mlp_dim(), 1}));
      TT v = add(matmul(blk.w_up, flat), reshape(blk.b_up, {cfg.mlp_dim(), 1}));
      TT m = mul(silu(u), v);
      TT dn = add(matmul(blk.w_down, m), reshape(blk.b_down, {C, 1}));
      h = add(h, mul(gt, reshape(dn, {C, H, W})));
    }
    detail::block_finite_check(h, bi);
  }

  return detail::cellwise_linear(p.dec_w, p.dec_b, h, H, W);
}

}  // namespace gridcast
