#pragma once

// Multi-step CRPS finetuning: two-member differentiable rollouts of K
// single-step predictions each, fair-CRPS loss on the final step only,
// backpropagation through time with per-step recomputation (sequential
// gradient checkpointing). Recomputed states must replay bit-exactly from
// their recorded noise seeds; the checkpointed gradients are bit-identical
// to the single-tape path.

#include <cstdint>
#include <vector>

#include "gridcast/crps.hpp"
#include "gridcast/forecast.hpp"
#include "gridcast/network.hpp"
#include "gridcast/objectives.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/toydata.hpp"

namespace gridcast {

// ---------------------------------------------------------------- curriculum

struct CurriculumStage {
  std::vector<std::int64_t> k_set;
  std::int64_t images = 0;
};

struct Curriculum {
  std::vector<CurriculumStage> stages;

  void validate() const {
    if (stages.empty()) contract_error("curriculum: no stages");
    for (const auto& s : stages) {
      if (s.images <= 0) contract_error("curriculum: stage budgets must be positive");
      if (s.k_set.empty()) contract_error("curriculum: empty K set");
      for (auto k : s.k_set)
        if (k < 1) contract_error("curriculum: K must be >= 1");
    }
  }

  // Stage active at this image count; images beyond the listed budgets
  // continue the final stage.
  const CurriculumStage& stage_at(std::int64_t images_seen) const {
    std::int64_t acc = 0;
    for (const auto& s : stages) {
      acc += s.images;
      if (images_seen < acc) return s;
    }
    return stages.back();
  }

  std::int64_t draw_k(std::int64_t images_seen, Rng& rng) const {
    const auto& s = stage_at(images_seen);
    return s.k_set[static_cast<std::size_t>(rng.next_below(s.k_set.size()))];
  }

  std::int64_t listed_budget() const {
    std::int64_t acc = 0;
    for (const auto& s : stages) acc += s.images;
    return acc;
  }
};

// The paper-proportioned default: half the budget on K in {1,2}, a third on
// K=3, the rest on K in {4,8}.
inline Curriculum default_curriculum(std::int64_t total_images) {
  Curriculum c;
  const std::int64_t a = total_images / 2;
  const std::int64_t b = total_images / 3;
  c.stages.push_back({{1, 2}, std::max<std::int64_t>(1, a)});
  c.stages.push_back({{3}, std::max<std::int64_t>(1, b)});
  c.stages.push_back({{4, 8}, std::max<std::int64_t>(1, total_images - a - b)});
  return c;
}

// --------------------------------------------------------------- batch data

template <typename T>
struct ElementData {
  Tensor<T> init_state;
  std::vector<Tensor<T>> truth;     // K physical states
  std::vector<Tensor<T>> forcings;  // K forcing stacks
};

template <typename T>
ElementData<T> element_cast(const BatchElement& el) {
  ElementData<T> out;
  out.init_state = el.init_state.template cast<T>();
  for (const auto& t : el.truth) out.truth.push_back(t.template cast<T>());
  for (const auto& f : el.forcings) out.forcings.push_back(f.template cast<T>());
  return out;
}

// ----------------------------------------------------------- building blocks

// One differentiable autoregressive step: standardize the state, run the
// single-step sampler with the recorded noise seed, unstandardize, add.
template <typename T>
Tensor<T> member_step(const TrigFlowSchedule& sched, const DenoiserParams<T>& params,
                      const NormStats& stats, const Tensor<T>& state, const Tensor<T>& forcings,
                      std::int64_t delta_index, std::uint64_t noise_seed) {
  const T sd = static_cast<T>(sched.sigma_d);
  Tensor<T> cond = standardize_full(state, stats);
  DenoiserFn<T> fn = denoiser_fn(params, cond, forcings, delta_index);
  Rng zrng(noise_seed);
  Tensor<T> z = sched.noise_field<T>(state.shape, zrng);
  Tensor<T> resid_std = scale(fn.eval(scale(z, T{1} / sd), sched.t_max()), -sd);
  return add(state, unstandardize_residual(resid_std, stats, delta_index));
}

inline std::uint64_t member_step_seed(std::uint64_t element_seed, std::int64_t member,
                                      std::int64_t step) {
  return mix_seed(mix_seed(element_seed, static_cast<std::uint64_t>(member)),
                  static_cast<std::uint64_t>(step));
}

// ------------------------------------------------- single-tape reference path

// The full K-step, two-member graph on one tape. Reference for the
// checkpointed path and the micro-config gradcheck route.
template <typename T>
Tensor<T> finetune_loss_fullgraph(const TrigFlowSchedule& sched,
                                  const DenoiserParams<T>& watched_params, const NormStats& stats,
                                  const ElementData<T>& el, std::int64_t delta_index,
                                  std::int64_t K, std::uint64_t element_seed,
                                  const LossWeights& weights) {
  if (static_cast<std::int64_t>(el.truth.size()) < K)
    contract_error("finetune: ground-truth trajectory shorter than K");
  std::vector<Tensor<T>> finals;
  for (std::int64_t m = 0; m < 2; ++m) {
    Tensor<T> state = el.init_state.detach();
    for (std::int64_t k = 0; k < K; ++k)
      state = member_step(sched, watched_params, stats, state,
                          el.forcings[static_cast<std::size_t>(k)], delta_index,
                          member_step_seed(element_seed, m, k));
    finals.push_back(state);
  }
  return crps_loss(finals, el.truth[static_cast<std::size_t>(K - 1)], weights);
}

// --------------------------------------------------------- checkpointed path

struct CheckpointedStats {
  std::size_t max_tape_nodes = 0;   // peak recorded ops on any single tape
  std::size_t boundary_states = 0;  // stored per-step states
};

// Forward pass stores only per-step boundary states; the backward pass
// recomputes each step from its boundary state and recorded noise seed and
// chains vector-Jacobian products. Gradients accumulate into `grad_accum`
// (aligned with the parameter traversal) in the same order the single-tape
// reverse sweep would visit them, so the results match bit-for-bit.
template <typename T>
double finetune_element_checkpointed(const TrigFlowSchedule& sched, const DenoiserParams<T>& params,
                                     const NormStats& stats, const ElementData<T>& el,
                                     std::int64_t delta_index, std::int64_t K,
                                     std::uint64_t element_seed, const LossWeights& weights,
                                     std::vector<Tensor<T>>& grad_accum,
                                     CheckpointedStats* stats_out = nullptr) {
  if (static_cast<std::int64_t>(el.truth.size()) < K)
    contract_error("finetune: ground-truth trajectory shorter than K");

  CheckpointedStats cs;

  // forward, storing boundary states only
  std::vector<std::vector<Tensor<T>>> states(2);  // [member][0..K]
  for (std::int64_t m = 0; m < 2; ++m) {
    states[m].push_back(el.init_state.detach());
    for (std::int64_t k = 0; k < K; ++k)
      states[m].push_back(member_step(sched, params, stats, states[m].back(),
                                      el.forcings[static_cast<std::size_t>(k)], delta_index,
                                      member_step_seed(element_seed, m, k)));
    cs.boundary_states += static_cast<std::size_t>(K + 1);
  }

  // loss tape over the two finals
  std::vector<Tensor<T>> final_grads(2);
  double loss_value;
  {
    Tape<T> tape;
    Tensor<T> f0 = tape.leaf(states[0].back());
    Tensor<T> f1 = tape.leaf(states[1].back());
    Tensor<T> loss =
        crps_loss<T>({f0, f1}, el.truth[static_cast<std::size_t>(K - 1)], weights);
    loss_value = static_cast<double>(loss.item());
    cs.max_tape_nodes = std::max(cs.max_tape_nodes, tape.node_count());
    GradMap<T> g = tape.backward(loss);
    final_grads[0] = g.get_or_zeros(f0);
    final_grads[1] = g.get_or_zeros(f1);
  }

  // reverse sweep: the single-tape reference records member 0 first, so its
  // backward pass visits member 1's steps first; mirror that order
  std::vector<const Tensor<T>*> param_order;
  params.for_each([&](const char*, const Tensor<T>& t, ParamKind) { param_order.push_back(&t); });
  if (grad_accum.empty())
    for (const auto* p : param_order) grad_accum.push_back(Tensor<T>::zeros((*p).shape));

  const auto& kt = kernels::table<T>();
  for (std::int64_t m = 1; m >= 0; --m) {
    Tensor<T> incoming = final_grads[static_cast<std::size_t>(m)];
    for (std::int64_t k = K - 1; k >= 0; --k) {
      Tape<T> tape;
      DenoiserParams<T> watched = params.watched(tape);
      Tensor<T> s_prev = tape.leaf(states[m][static_cast<std::size_t>(k)]);
      Tensor<T> s_next = member_step(sched, watched, stats, s_prev,
                                     el.forcings[static_cast<std::size_t>(k)], delta_index,
                                     member_step_seed(element_seed, m, k));
      if (s_next.vec() != states[m][static_cast<std::size_t>(k + 1)].vec())
        contract_error("checkpointed rollout: seed replay mismatch at member " +
                       std::to_string(m) + " step " + std::to_string(k));
      cs.max_tape_nodes = std::max(cs.max_tape_nodes, tape.node_count());

      Tensor<T> pseudo = sum(mul(s_next, incoming.detach()));
      GradMap<T> g = tape.backward(pseudo);

      std::size_t i = 0;
      watched.for_each([&](const char*, const Tensor<T>& leaf, ParamKind) {
        if (g.has(leaf)) {
          const Tensor<T>& gv = g.at(leaf);
          kt.add(grad_accum[i].data(), gv.data(), grad_accum[i].data(), gv.numel());
        }
        ++i;
      });
      incoming = g.get_or_zeros(s_prev);
    }
  }
  if (stats_out) *stats_out = cs;
  return loss_value;
}

}  // namespace gridcast
