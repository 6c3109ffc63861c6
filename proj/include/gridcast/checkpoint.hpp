#pragma once

// Checkpoints: model weights + EMA shadow + optimizer state + progress
// counters in one container. Round trips are bit-exact, so a resumed run
// reproduces the uninterrupted one.

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/config.hpp"
#include "gridcast/network.hpp"

namespace gridcast {

struct TrainerState {
  std::string phase;  // diffusion | consistency | finetune
  std::int64_t images_seen = 0;
  Denoiser<float> model;

  // AdamW state (diffusion and finetune phases), slot-aligned with the
  // parameter traversal
  std::vector<Tensor<float>> adam_m, adam_v;
  std::int64_t adam_steps = 0;

  // Muon state (consistency phase): momentum over the muon-routed subset,
  // companion AdamW over the rest
  std::vector<Tensor<float>> muon_momentum;
  std::vector<Tensor<float>> muon_adam_m, muon_adam_v;
  std::int64_t muon_adam_steps = 0;
};

void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainerState& st);

// cfg is restored from the checkpoint manifest.
TrainerState load_checkpoint(const std::string& path, RunConfig* cfg_out);

}  // namespace gridcast
