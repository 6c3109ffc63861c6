#pragma once

// Training loops for the three phases: diffusion pretraining (AdamW),
// consistency pretraining (Muon + tangent warmup), and CRPS finetuning
// (AdamW at the constant finetune rate, curriculum over K). Every random
// draw is keyed by (seed, phase, step index), so a resumed run replays the
// uninterrupted one exactly.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gridcast/checkpoint.hpp"
#include "gridcast/config.hpp"
#include "gridcast/toydata.hpp"

namespace gridcast {

struct TrainLogRow {
  std::int64_t images = 0;
  double loss = 0;
  double lr = 0;
  double aux = 0;  // warmup r (consistency) or K (finetune)
};

struct TrainStats {
  std::vector<TrainLogRow> log;
  double wall_seconds = 0;
  std::int64_t skipped_steps = 0;
  double last_loss = 0;
};

// Fresh state for a phase; weights initialized from cfg.seed.
TrainerState init_trainer(const RunConfig& cfg, const std::string& phase);

// Continue training until images_seen reaches target_images. Mutates st in
// place; per-step log rows are appended to the returned stats (and echoed to
// log_stream when given).
TrainStats train_phase(const RunConfig& cfg, const TrajectoryDataset& data, TrainerState& st,
                       std::int64_t target_images, std::ostream* log_stream = nullptr);

}  // namespace gridcast
