#include "gridcast/trainer.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "gridcast/finetune.hpp"
#include "gridcast/forecast.hpp"
#include "gridcast/objectives.hpp"
#include "gridcast/optim.hpp"

namespace gridcast {
namespace {

std::uint64_t phase_salt(const std::string& phase) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : phase) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

struct SlotPlan {
  std::vector<Tensor<float>*> values;
  std::vector<bool> muon, decay;
  std::vector<std::string> names;
  std::size_t size() const { return values.size(); }
};

SlotPlan make_plan(DenoiserParams<float>& p) {
  SlotPlan plan;
  p.for_each([&](const char* name, Tensor<float>& t, ParamKind kind) {
    plan.values.push_back(&t);
    plan.muon.push_back(muon_eligible(kind) && t.rank() == 2);
    plan.decay.push_back(decays(kind));
    plan.names.emplace_back(name);
  });
  return plan;
}

std::vector<Tensor<float>> zero_grads(const SlotPlan& plan) {
  std::vector<Tensor<float>> g;
  g.reserve(plan.size());
  for (const auto* v : plan.values) g.push_back(Tensor<float>::zeros(v->shape));
  return g;
}

void add_into(std::vector<Tensor<float>>& acc, const std::vector<Tensor<float>>& src) {
  const auto& kt = kernels::table<float>();
  for (std::size_t i = 0; i < acc.size(); ++i)
    kt.add(acc[i].data(), src[i].data(), acc[i].data(), acc[i].numel());
}

// Per-element pretraining losses (diffusion or consistency), gradients summed
// into gsum in parameter order.
double pretrain_element(const RunConfig& cfg, const TrajectoryDataset& data, TrainerState& st,
                        bool diffusion, const BatchElement& el, std::int64_t delta_index,
                        double warmup_r, std::uint64_t eseed, std::vector<Tensor<float>>& gsum) {
  const auto& kt = kernels::table<float>();
  const LossWeights weights = loss_weights_for(cfg);
  Tensor<float> x_cond = standardize_full(el.init_state, data.stats);
  const Tensor<float>& forc = el.forcings.front();

  Tape<float> tape;
  DenoiserParams<float> watched = st.model.params.watched(tape);
  DenoiserFn<float> live = denoiser_fn(watched, x_cond, forc, delta_index);
  Rng erng(eseed);

  LossResult<float> res;
  if (diffusion) {
    res = diffusion_loss(cfg.schedule, live, el.target_residual_std, erng, weights);
  } else {
    DenoiserFn<float> det = denoiser_fn(st.model.params, x_cond, forc, delta_index);
    const NoiseDraw d = NoiseDraw::sample(cfg.schedule, erng);
    Tensor<float> z = cfg.schedule.noise_field<float>(el.target_residual_std.shape, erng);
    res = consistency_loss_at(cfg.schedule, live, det, el.target_residual_std, z, d.t, weights,
                              warmup_r, cfg.pretrain.tangent_c);
  }
  const double loss = static_cast<double>(res.loss.item());
  GradMap<float> grads = tape.backward(res.loss);
  std::size_t i = 0;
  watched.for_each([&](const char*, const Tensor<float>& leaf, ParamKind) {
    if (grads.has(leaf)) {
      const Tensor<float>& g = grads.at(leaf);
      kt.add(gsum[i].data(), g.data(), gsum[i].data(), g.numel());
    }
    ++i;
  });
  return loss;
}

}  // namespace

TrainerState init_trainer(const RunConfig& cfg, const std::string& phase) {
  TrainerState st;
  st.phase = phase;
  Rng rng(mix_seed(cfg.seed, phase_salt("init")));
  st.model = init_denoiser<float>(cfg.network, rng);
  return st;
}

TrainStats train_phase(const RunConfig& cfg, const TrajectoryDataset& data, TrainerState& st,
                       std::int64_t target_images, std::ostream* log_stream) {
  const auto t_start = std::chrono::steady_clock::now();
  TrainStats stats;

  const bool diffusion = st.phase == "diffusion";
  const bool consistency = st.phase == "consistency";
  const bool finetune = st.phase == "finetune";
  const bool cm_uses_muon = consistency && cfg.pretrain.cm_optimizer == "muon";
  if (!diffusion && !consistency && !finetune)
    contract_error("trainer: unknown phase '" + st.phase + "'");

  const std::int64_t B = finetune ? cfg.finetune.batch_size : cfg.pretrain.batch_size;
  const int n_threads = finetune ? cfg.finetune.n_threads : cfg.pretrain.n_threads;
  const std::uint64_t salt = phase_salt(st.phase);
  const LossWeights weights = loss_weights_for(cfg);

  const std::int64_t ramp_images = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(cfg.pretrain.tangent_ramp_frac * cfg.pretrain.total_images));
  const std::int64_t halflife_images = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(cfg.pretrain.ema_halflife_frac * cfg.pretrain.total_images));

  SlotPlan plan = make_plan(st.model.params);

  // optimizers, state restored from the trainer state
  AdamWOptimizer<float> adamw(finetune ? cfg.finetune.adamw : cfg.pretrain.adamw);
  MuonOptimizer<float> muon(cfg.pretrain.muon);
  if (!st.adam_m.empty()) {
    adamw.moments1() = st.adam_m;
    adamw.moments2() = st.adam_v;
    adamw.set_step_count(st.adam_steps);
  }
  if (!st.muon_momentum.empty()) {
    muon.momentum() = st.muon_momentum;
    muon.companion().moments1() = st.muon_adam_m;
    muon.companion().moments2() = st.muon_adam_v;
    muon.companion().set_step_count(st.muon_adam_steps);
  }
  LrSchedule lr_sched = pretrain_lr_schedule(
      cfg, cm_uses_muon ? cfg.pretrain.muon.lr : cfg.pretrain.adamw.lr);
  Curriculum curriculum;
  if (finetune) {
    curriculum = curriculum_for(cfg);
  } else {
    curriculum.stages.push_back({{1}, 1});
  }

  const std::int64_t log_every =
      finetune ? cfg.finetune.log_every_images : cfg.pretrain.log_every_images;
  std::int64_t next_log = st.images_seen;

  while (st.images_seen < target_images) {
    const std::int64_t step_index = st.images_seen / B;
    const std::uint64_t step_seed = mix_seed(mix_seed(cfg.seed, salt), step_index);
    Rng brng(mix_seed(step_seed, 17));

    const std::int64_t K = finetune ? curriculum.draw_k(st.images_seen, brng) : 1;
    BatchDraw batch = sample_batch(data, brng, K, B, Split::train);

    const double warmup_r =
        consistency
            ? std::min(1.0, static_cast<double>(st.images_seen) / static_cast<double>(ramp_images))
            : 1.0;

    // threaded element processing: contiguous chunks, merged in thread order
    std::vector<std::vector<Tensor<float>>> thread_grads;
    std::vector<double> thread_loss;
    std::vector<std::string> thread_error;
    const int nt = std::max(1, std::min<int>(n_threads, static_cast<int>(B)));
    thread_grads.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) thread_grads.push_back(zero_grads(plan));
    thread_loss.assign(static_cast<std::size_t>(nt), 0.0);
    thread_error.assign(static_cast<std::size_t>(nt), "");

    auto worker = [&](int t) {
      const std::int64_t lo = B * t / nt, hi = B * (t + 1) / nt;
      try {
        for (std::int64_t e = lo; e < hi; ++e) {
          const std::uint64_t eseed = mix_seed(step_seed, 1000 + static_cast<std::uint64_t>(e));
          const BatchElement& el = batch.elements[static_cast<std::size_t>(e)];
          if (finetune) {
            ElementData<float> ed;
            ed.init_state = el.init_state;
            ed.truth = el.truth;
            ed.forcings = el.forcings;
            thread_loss[static_cast<std::size_t>(t)] += finetune_element_checkpointed(
                cfg.schedule, st.model.params, data.stats, ed, batch.delta_index, K, eseed,
                weights, thread_grads[static_cast<std::size_t>(t)]);
          } else {
            thread_loss[static_cast<std::size_t>(t)] +=
                pretrain_element(cfg, data, st, diffusion, el, batch.delta_index, warmup_r, eseed,
                                 thread_grads[static_cast<std::size_t>(t)]);
          }
        }
      } catch (const std::exception& ex) {
        thread_error[static_cast<std::size_t>(t)] = ex.what();
      }
    };
    if (nt == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < nt; ++t) pool.emplace_back(worker, t);
      for (auto& th : pool) th.join();
    }

    bool failed = false;
    for (const auto& err : thread_error)
      if (!err.empty()) {
        if (log_stream) *log_stream << "step " << step_index << " aborted: " << err << "\n";
        failed = true;
      }
    if (failed) {
      ++stats.skipped_steps;
      st.images_seen += B;
      continue;
    }

    std::vector<Tensor<float>>& grads = thread_grads[0];
    for (int t = 1; t < nt; ++t) add_into(grads, thread_grads[static_cast<std::size_t>(t)]);
    const auto& kt = kernels::table<float>();
    const float inv_b = 1.0f / static_cast<float>(B);
    for (auto& g : grads) kt.scale(g.data(), inv_b, g.data(), g.numel());
    double loss = 0;
    for (double l : thread_loss) loss += l;
    loss /= static_cast<double>(B);

    std::vector<ParamSlot<float>> slots(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
      slots[i].value = plan.values[i];
      slots[i].grad = &grads[i];
      slots[i].decay = plan.decay[i];
      slots[i].muon = plan.muon[i];
      slots[i].name = plan.names[i];
    }

    double lr;
    bool applied;
    std::string skip_reason;
    if (cm_uses_muon) {
      lr = lr_sched.at(st.images_seen);
      applied = muon.step(slots, lr / lr_sched.max_lr, &skip_reason);
    } else if (diffusion || consistency) {
      lr = lr_sched.at(st.images_seen);
      applied = adamw.step(slots, lr, &skip_reason);
    } else {
      lr = cfg.finetune.lr;
      applied = adamw.step(slots, lr, &skip_reason);
    }
    if (!applied) {
      ++stats.skipped_steps;
      if (log_stream)
        *log_stream << "step " << step_index << " skipped: non-finite gradient in '"
                    << skip_reason << "'\n";
    } else {
      ema_update(st.model.ema, st.model.params, B, halflife_images);
    }

    st.images_seen += B;
    stats.last_loss = loss;
    if (st.images_seen >= next_log || st.images_seen >= target_images) {
      TrainLogRow row{st.images_seen, loss, lr,
                      consistency ? warmup_r : static_cast<double>(K)};
      stats.log.push_back(row);
      if (log_stream)
        *log_stream << st.phase << " images=" << row.images << " loss=" << row.loss
                    << " lr=" << row.lr << (consistency ? " r=" : " k=") << row.aux << "\n";
      next_log += log_every;
    }
  }

  // persist optimizer state for checkpointing
  st.adam_m = adamw.moments1();
  st.adam_v = adamw.moments2();
  st.adam_steps = adamw.step_count();
  st.muon_momentum = muon.momentum();
  st.muon_adam_m = muon.companion().moments1();
  st.muon_adam_v = muon.companion().moments2();
  st.muon_adam_steps = muon.companion().step_count();

  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return stats;
}

}  // namespace gridcast
