#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "gridcast/checkpoint.hpp"
#include "gridcast/config.hpp"
#include "gridcast/objectives.hpp"
#include "gridcast/trainer.hpp"

using namespace gridcast;

namespace {

RunConfig micro_run_config() {
  RunConfig cfg;
  cfg.seed = 77;
  cfg.data.n_lat = 8;
  cfg.data.n_lon = 16;
  cfg.data.n_vars = 4;
  cfg.data.n_ticks = 400;
  cfg.data.spinup_ticks = 40;
  cfg.network.n_lat = 8;
  cfg.network.n_lon = 16;
  cfg.network.n_vars = 4;
  cfg.network.n_forcings = 3;
  cfg.network.hidden_dim = 8;
  cfg.network.n_blocks = 1;
  cfg.network.embed_dim = 8;
  cfg.network.sin_features = 4;
  cfg.network.kernel_width = 3;
  cfg.pretrain.total_images = 64;
  cfg.pretrain.batch_size = 8;
  cfg.pretrain.n_threads = 2;
  cfg.pretrain.log_every_images = 8;
  cfg.finetune.total_images = 32;
  cfg.finetune.batch_size = 4;
  cfg.finetune.n_threads = 2;
  cfg.finetune.log_every_images = 4;
  return cfg;
}

std::vector<float> flatten_params(const DenoiserParams<float>& p) {
  std::vector<float> out;
  p.for_each([&](const char*, const Tensor<float>& t, ParamKind) {
    out.insert(out.end(), t.vec().begin(), t.vec().end());
  });
  return out;
}

}  // namespace

TEST_CASE("diffusion phase trains and mutates parameters deterministically") {
  RunConfig cfg = micro_run_config();
  TrajectoryDataset data = make_dataset(cfg.data);

  TrainerState st = init_trainer(cfg, "diffusion");
  const auto before = flatten_params(st.model.params);
  TrainStats stats = train_phase(cfg, data, st, 64);
  CHECK(st.images_seen == 64);
  CHECK(stats.skipped_steps == 0);
  CHECK(std::isfinite(stats.last_loss));
  CHECK(flatten_params(st.model.params) != before);
  CHECK(!stats.log.empty());

  // bit-determinism of the whole phase
  TrainerState st2 = init_trainer(cfg, "diffusion");
  (void)train_phase(cfg, data, st2, 64);
  CHECK(flatten_params(st.model.params) == flatten_params(st2.model.params));
  CHECK(flatten_params(st.model.ema) == flatten_params(st2.model.ema));
}

TEST_CASE("resumed training reproduces the uninterrupted loss trace bit-for-bit") {
  for (const char* phase : {"diffusion", "consistency"}) {
    RunConfig cfg = micro_run_config();
    TrajectoryDataset data = make_dataset(cfg.data);

    // uninterrupted run to 128 images
    TrainerState full = init_trainer(cfg, phase);
    TrainStats full_stats = train_phase(cfg, data, full, 128);

    // interrupted at 64, checkpointed through disk, resumed to 128
    TrainerState half = init_trainer(cfg, phase);
    TrainStats first_half = train_phase(cfg, data, half, 64);
    const std::string path = std::string("/tmp/gridcast_resume_") + phase + ".bin";
    save_checkpoint(path, cfg, half);
    RunConfig cfg2;
    TrainerState resumed = load_checkpoint(path, &cfg2);
    TrainStats second_half = train_phase(cfg2, data, resumed, 128);

    CHECK(flatten_params(full.model.params) == flatten_params(resumed.model.params));
    CHECK(flatten_params(full.model.ema) == flatten_params(resumed.model.ema));

    // the loss traces agree row by row
    std::vector<TrainLogRow> joined = first_half.log;
    joined.insert(joined.end(), second_half.log.begin(), second_half.log.end());
    REQUIRE(joined.size() == full_stats.log.size());
    for (std::size_t i = 0; i < joined.size(); ++i) {
      CHECK(joined[i].images == full_stats.log[i].images);
      CHECK(joined[i].loss == full_stats.log[i].loss);
    }
  }
}

TEST_CASE("consistency phase ramps the tangent warmup") {
  RunConfig cfg = micro_run_config();
  cfg.pretrain.total_images = 80;
  cfg.pretrain.tangent_ramp_frac = 0.5;  // ramp over the first 40 images
  cfg.pretrain.log_every_images = 8;
  TrajectoryDataset data = make_dataset(cfg.data);

  TrainerState st = init_trainer(cfg, "consistency");
  TrainStats stats = train_phase(cfg, data, st, 80);
  CHECK(st.images_seen == 80);
  CHECK(std::isfinite(stats.last_loss));
  REQUIRE(stats.log.size() >= 3);
  CHECK(stats.log.front().aux < 1.0);  // warmup r mid-ramp
  CHECK(stats.log.back().aux == 1.0);  // saturated
  double r_prev = -1;
  for (const auto& row : stats.log) {
    CHECK(row.aux >= r_prev);
    r_prev = row.aux;
  }
}

TEST_CASE("finetune phase runs the curriculum on a pretrained model") {
  RunConfig cfg = micro_run_config();
  TrajectoryDataset data = make_dataset(cfg.data);

  TrainerState st = init_trainer(cfg, "consistency");
  (void)train_phase(cfg, data, st, 32);

  TrainerState ft;
  ft.phase = "finetune";
  ft.model = std::move(st.model);
  TrainStats stats = train_phase(cfg, data, ft, 32);
  CHECK(ft.images_seen == 32);
  CHECK(stats.skipped_steps == 0);
  CHECK(std::isfinite(stats.last_loss));
  for (const auto& row : stats.log) CHECK(row.lr == cfg.finetune.lr);
}

TEST_CASE("batch loss is invariant to element order (mean aggregation)") {
  RunConfig cfg = micro_run_config();
  TrajectoryDataset data = make_dataset(cfg.data);
  LossWeights weights = loss_weights_for(cfg);
  Rng rng(9);
  BatchDraw batch = sample_batch(data, rng, 1, 4);

  TrainerState st = init_trainer(cfg, "diffusion");
  auto element_loss = [&](const BatchElement& el, std::uint64_t eseed) {
    Tensor<float> x_cond = standardize_full(el.init_state, data.stats);
    auto fn = denoiser_fn(st.model.params, x_cond, el.forcings[0], batch.delta_index);
    Rng erng(eseed);
    return static_cast<double>(
        diffusion_loss(cfg.schedule, fn, el.target_residual_std, erng, weights).loss.item());
  };

  std::vector<double> losses;
  for (std::size_t e = 0; e < batch.elements.size(); ++e)
    losses.push_back(element_loss(batch.elements[e], 100 + e));

  double fwd = 0, rev = 0;
  for (std::size_t e = 0; e < losses.size(); ++e) fwd += losses[e];
  for (std::size_t e = losses.size(); e-- > 0;) rev += losses[e];
  CHECK(std::fabs(fwd - rev) / std::fabs(fwd) < 1e-12);
}
