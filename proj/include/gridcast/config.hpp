#pragma once

// Run configuration: one JSON file with a section per module. Missing keys
// fall back to defaults, so configs only state what they change.

#include <cstdint>
#include <string>

#include "gridcast/finetune.hpp"
#include "gridcast/network.hpp"
#include "gridcast/optim.hpp"
#include "gridcast/schedule.hpp"
#include "gridcast/toydata.hpp"
#include "gridcast/weights.hpp"

namespace gridcast {

struct PretrainConfig {
  std::int64_t total_images = 24000;
  std::int64_t batch_size = 8;
  double warmup_frac = 2.0 / 15.0;        // of total_images
  double ema_halflife_frac = 0.5 / 15.0;  // of total_images
  double tangent_ramp_frac = 0.2;         // of total_images
  double tangent_c = 0.1;
  double lr_min_fraction = 1e-4;
  AdamWConfig adamw;  // diffusion pretraining
  MuonConfig muon;    // consistency pretraining (when cm_optimizer == "muon")
  std::string cm_optimizer = "muon";  // or "adamw"
  int n_threads = 2;
  std::int64_t log_every_images = 2000;
};

struct FinetuneCurriculumStage {
  std::vector<std::int64_t> k_set;
  double frac = 0.0;  // of finetune total_images
};

struct FinetuneConfig {
  std::int64_t total_images = 9000;
  std::int64_t batch_size = 4;
  double lr = 1e-5;
  AdamWConfig adamw{1e-5, 0.9, 0.95, 1e-6, 1e-5};
  std::vector<FinetuneCurriculumStage> curriculum{
      {{1, 2}, 0.5}, {{3}, 1.0 / 3.0}, {{4, 8}, 1.0 / 6.0}};
  int n_threads = 2;
  std::int64_t log_every_images = 1000;
};

struct ForecastRunConfig {
  std::int64_t n_members = 8;
  int ode_steps = 20;
  int ode_order = 2;
  int n_threads = 2;
};

struct EvalConfig {
  std::int64_t spectra_lead = 10;         // 1-based lead for the spectra table
  std::int64_t hovmoller_var = 0;
  std::int64_t hovmoller_halfwidth = 2;   // rows either side of the equator
};

struct RunConfig {
  std::uint64_t seed = 1234;
  MiniAtmosConfig data;
  DenoiserConfig network;
  TrigFlowSchedule schedule;
  double alpha_clip = 0.1;
  double kappa_level_floor = 0.05;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  ForecastRunConfig forecast;
  EvalConfig eval;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);  // defaults overlaid with the file
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_json(const RunConfig& cfg);          // pretty full dump
std::string run_config_json_compact(const RunConfig& cfg);  // one line, embeddable
std::string config_hash_hex(const RunConfig& cfg);

LossWeights loss_weights_for(const RunConfig& cfg);
Curriculum curriculum_for(const RunConfig& cfg);
LrSchedule pretrain_lr_schedule(const RunConfig& cfg, double max_lr);

// mixing kind <-> text
std::string mixing_kind_name(MixingKind k);
MixingKind mixing_kind_from_name(const std::string& s);

}  // namespace gridcast
