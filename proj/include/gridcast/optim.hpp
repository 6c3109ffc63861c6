#pragma once

// Optimizers: decoupled-weight-decay Adam, Muon (momentum + approximate
// orthogonalization of 2-D updates via the quintic Newton-Schulz iteration),
// the warmup/cosine/finetune learning-rate schedule, and EMA shadows.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/kernels.hpp"
#include "gridcast/network.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

struct AdamWConfig {
  double lr = 5e-4;  // maximum; the schedule scales it
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-6;
  double weight_decay = 1e-5;
};

struct MuonConfig {
  double lr = 0.02;
  double weight_decay = 0.01;
  double momentum = 0.95;
  int ns_iters = 5;
  AdamWConfig companion{3e-4, 0.9, 0.95, 1e-10, 0.01};  // 1-D and embedding params
};

template <typename T>
struct ParamSlot {
  Tensor<T>* value = nullptr;
  const Tensor<T>* grad = nullptr;  // null: no gradient reached this parameter
  bool decay = true;
  bool muon = false;
  std::string name;
};

template <typename T>
bool slots_grads_finite(const std::vector<ParamSlot<T>>& slots, std::string* bad_name) {
  for (const auto& s : slots) {
    if (s.grad && !s.grad->all_finite()) {
      if (bad_name) *bad_name = s.name;
      return false;
    }
  }
  return true;
}

// ------------------------------------------------------------------ AdamW

template <typename T>
class AdamWOptimizer {
 public:
  explicit AdamWOptimizer(AdamWConfig cfg) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }

  // Applies one update at absolute learning rate `lr`. Skips (and reports
  // false) when any gradient is non-finite; parameters are left untouched.
  bool step(std::vector<ParamSlot<T>>& slots, double lr, std::string* skip_reason = nullptr) {
    if (!slots_grads_finite(slots, skip_reason)) return false;
    ensure_state(slots);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto& s = slots[i];
      if (!s.grad) continue;
      T* p = s.value->data();
      const T* g = s.grad->data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const std::int64_t n = s.value->numel();
      const double b1 = cfg_.beta1, b2 = cfg_.beta2;
      for (std::int64_t j = 0; j < n; ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
        const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        double pj = static_cast<double>(p[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (s.decay) pj -= lr * cfg_.weight_decay * static_cast<double>(p[j]);
        p[j] = static_cast<T>(pj);
      }
    }
    return true;
  }

  std::vector<Tensor<T>>& moments1() { return m_; }
  std::vector<Tensor<T>>& moments2() { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  void ensure_state(const std::vector<ParamSlot<T>>& slots) {
    if (!m_.empty()) {
      if (m_.size() != slots.size())
        contract_error("adamw: slot count changed between steps");
      return;
    }
    for (const auto& s : slots) {
      m_.push_back(Tensor<T>::zeros(s.value->shape));
      v_.push_back(Tensor<T>::zeros(s.value->shape));
    }
  }

  AdamWConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

// ------------------------------------------------------------ Newton-Schulz

// Quintic Newton-Schulz orthogonalization with the published Muon
// coefficients, applied to the Frobenius-normalized input. Five iterations
// drive every singular value into a band around 1 rather than to 1 exactly.
template <typename T>
Tensor<T> newton_schulz_orthogonalize(const Tensor<T>& g, int iters) {
  if (g.rank() != 2)
    contract_error("newton_schulz: expected a rank-2 tensor, got " + shape_str(g.shape));
  const double a = 3.4445, b = -4.7750, c = 2.0315;
  const auto& kt = kernels::table<T>();

  const bool transposed = g.shape[0] > g.shape[1];
  Tensor<T> x = transposed ? transpose2d(g) : g.clone();
  const std::int64_t r = x.shape[0], cdim = x.shape[1];

  const double fro = std::sqrt(static_cast<double>(kt.dot(x.data(), x.data(), x.numel())));
  kt.scale(x.data(), static_cast<T>(1.0 / (fro + 1e-7)), x.data(), x.numel());

  Tensor<T> A = Tensor<T>::zeros({r, r});
  Tensor<T> B = Tensor<T>::zeros({r, r});
  Tensor<T> tmp = Tensor<T>::zeros({r, cdim});
  for (int it = 0; it < iters; ++it) {
    std::fill(A.vec().begin(), A.vec().end(), T{0});
    kt.gemm_nt(x.data(), x.data(), A.data(), r, cdim, r);  // A = X X^T
    std::fill(B.vec().begin(), B.vec().end(), T{0});
    kt.gemm_nn(A.data(), A.data(), B.data(), r, r, r);
    kt.scale(B.data(), static_cast<T>(c), B.data(), B.numel());
    kt.axpy(static_cast<T>(b), A.data(), B.data(), A.numel());  // B = bA + cA^2
    std::fill(tmp.vec().begin(), tmp.vec().end(), T{0});
    kt.gemm_nn(B.data(), x.data(), tmp.data(), r, r, cdim);
    kt.scale(x.data(), static_cast<T>(a), x.data(), x.numel());
    kt.add(x.data(), tmp.data(), x.data(), x.numel());  // X = aX + (bA + cA^2)X
  }
  return transposed ? transpose2d(x) : x;
}

// ------------------------------------------------------------------- Muon

template <typename T>
class MuonOptimizer {
 public:
  explicit MuonOptimizer(MuonConfig cfg) : cfg_(cfg), companion_(cfg.companion) {}

  const MuonConfig& config() const { return cfg_; }

  // lr_scale in (0, 1] multiplies both the Muon rate and the companion rate,
  // preserving their configured ratio under the shared schedule.
  bool step(std::vector<ParamSlot<T>>& slots, double lr_scale,
            std::string* skip_reason = nullptr) {
    if (!slots_grads_finite(slots, skip_reason)) return false;

    std::vector<ParamSlot<T>> muon_slots, companion_slots;
    for (auto& s : slots) {
      if (s.muon) {
        if (s.value->rank() != 2)
          contract_error("muon: non-2D parameter '" + s.name + "' routed to Muon");
        muon_slots.push_back(s);
      } else {
        companion_slots.push_back(s);
      }
    }
    ensure_state(muon_slots);

    const double lr = cfg_.lr * lr_scale;
    const auto& kt = kernels::table<T>();
    for (std::size_t i = 0; i < muon_slots.size(); ++i) {
      auto& s = muon_slots[i];
      if (!s.grad) continue;
      Tensor<T>& buf = momentum_[i];
      // b <- m b + g
      kt.scale(buf.data(), static_cast<T>(cfg_.momentum), buf.data(), buf.numel());
      kt.add(buf.data(), s.grad->data(), buf.data(), buf.numel());

      Tensor<T> dir = newton_schulz_orthogonalize(buf, cfg_.ns_iters);
      const double rows = static_cast<double>(s.value->shape[0]);
      const double cols = static_cast<double>(s.value->shape[1]);
      const double aspect = std::sqrt(std::max(rows, cols) / std::min(rows, cols));
      T* p = s.value->data();
      kt.axpy(static_cast<T>(-lr * aspect), dir.data(), p, dir.numel());
      if (s.decay)
        kt.scale(p, static_cast<T>(1.0 - lr * cfg_.weight_decay), p, s.value->numel());
    }
    return companion_.step(companion_slots, cfg_.companion.lr * lr_scale);
  }

  std::vector<Tensor<T>>& momentum() { return momentum_; }
  AdamWOptimizer<T>& companion() { return companion_; }

 private:
  void ensure_state(const std::vector<ParamSlot<T>>& muon_slots) {
    if (!momentum_.empty()) {
      if (momentum_.size() != muon_slots.size())
        contract_error("muon: slot count changed between steps");
      return;
    }
    for (const auto& s : muon_slots) momentum_.push_back(Tensor<T>::zeros(s.value->shape));
  }

  MuonConfig cfg_;
  std::vector<Tensor<T>> momentum_;
  AdamWOptimizer<T> companion_;
};

// ------------------------------------------------------------- LR schedule

// Linear warmup from max_lr * min_fraction, cosine anneal back down to
// max_lr * min_fraction, then the constant finetuning rate.
struct LrSchedule {
  double max_lr = 5e-4;
  double min_fraction = 1e-4;
  std::int64_t warmup_images = 1;
  std::int64_t anneal_end_images = 2;
  double finetune_lr = 1e-5;

  double at(std::int64_t images) const {
    const double lo = max_lr * min_fraction;
    if (images < 0) contract_error("lr schedule: negative image count");
    if (images <= warmup_images) {
      const double u = warmup_images > 0
                           ? static_cast<double>(images) / static_cast<double>(warmup_images)
                           : 1.0;
      return lo + (max_lr - lo) * u;
    }
    if (images <= anneal_end_images) {
      const double u = static_cast<double>(images - warmup_images) /
                       static_cast<double>(anneal_end_images - warmup_images);
      return lo + (max_lr - lo) * 0.5 * (1.0 + std::cos(kPi * u));
    }
    return finetune_lr;
  }
};

// --------------------------------------------------------------------- EMA

inline double ema_decay(std::int64_t batch_images, std::int64_t halflife_images) {
  if (halflife_images <= 0) contract_error("ema: halflife must be positive");
  return std::pow(0.5, static_cast<double>(batch_images) / static_cast<double>(halflife_images));
}

// shadow <- d shadow + (1 - d) params, d = 0.5^(batch_images / halflife)
template <typename T>
void ema_update(DenoiserParams<T>& shadow, const DenoiserParams<T>& params,
                std::int64_t batch_images, std::int64_t halflife_images) {
  const T d = static_cast<T>(ema_decay(batch_images, halflife_images));
  std::vector<const Tensor<T>*> src;
  params.for_each([&](const char*, const Tensor<T>& t, ParamKind) { src.push_back(&t); });
  std::size_t i = 0;
  const auto& kt = kernels::table<T>();
  shadow.for_each([&](const char* name, Tensor<T>& t, ParamKind) {
    const Tensor<T>& p = *src[i++];
    if (t.shape != p.shape) contract_error(std::string("ema: shape mismatch at ") + name);
    kt.scale(t.data(), d, t.data(), t.numel());
    kt.axpy(static_cast<T>(1) - d, p.data(), t.data(), t.numel());
  });
}

}  // namespace gridcast
