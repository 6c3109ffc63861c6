#include "gridcast/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gridcast {
namespace {

using nlohmann::json;

json schedule_json(const TrigFlowSchedule& s) {
  return {{"sigma_d", s.sigma_d}, {"sigma_min", s.sigma_min}, {"sigma_max", s.sigma_max}};
}

void schedule_from(const json& j, TrigFlowSchedule& s) {
  s.sigma_d = j.value("sigma_d", s.sigma_d);
  s.sigma_min = j.value("sigma_min", s.sigma_min);
  s.sigma_max = j.value("sigma_max", s.sigma_max);
}

json data_json(const MiniAtmosConfig& c_in) {
  MiniAtmosConfig c = c_in;
  c.apply_defaults();  // canonical dump: per-variable vectors materialized
  return {{"n_lat", c.n_lat},
          {"n_lon", c.n_lon},
          {"n_vars", c.n_vars},
          {"n_surface_vars", c.n_surface_vars},
          {"advect_lon", c.advect_lon},
          {"advect_lat", c.advect_lat},
          {"diffusion", c.diffusion},
          {"coupling", c.coupling},
          {"reaction_forcing", c.reaction_forcing},
          {"seasonal_amp", c.seasonal_amp},
          {"diurnal_amp", c.diurnal_amp},
          {"seasonal_period_ticks", c.seasonal_period_ticks},
          {"diurnal_period_ticks", c.diurnal_period_ticks},
          {"oro_amp", c.oro_amp},
          {"tick_dt", c.tick_dt},
          {"substeps", c.substeps},
          {"n_ticks", c.n_ticks},
          {"spinup_ticks", c.spinup_ticks},
          {"train_frac", c.train_frac},
          {"val_frac", c.val_frac},
          {"seed", c.seed}};
}

void data_from(const json& j, MiniAtmosConfig& c) {
  c.n_lat = j.value("n_lat", c.n_lat);
  c.n_lon = j.value("n_lon", c.n_lon);
  c.n_vars = j.value("n_vars", c.n_vars);
  c.n_surface_vars = j.value("n_surface_vars", c.n_surface_vars);
  c.advect_lon = j.value("advect_lon", c.advect_lon);
  c.advect_lat = j.value("advect_lat", c.advect_lat);
  c.diffusion = j.value("diffusion", c.diffusion);
  c.coupling = j.value("coupling", c.coupling);
  c.reaction_forcing = j.value("reaction_forcing", c.reaction_forcing);
  c.seasonal_amp = j.value("seasonal_amp", c.seasonal_amp);
  c.diurnal_amp = j.value("diurnal_amp", c.diurnal_amp);
  c.seasonal_period_ticks = j.value("seasonal_period_ticks", c.seasonal_period_ticks);
  c.diurnal_period_ticks = j.value("diurnal_period_ticks", c.diurnal_period_ticks);
  c.oro_amp = j.value("oro_amp", c.oro_amp);
  c.tick_dt = j.value("tick_dt", c.tick_dt);
  c.substeps = j.value("substeps", c.substeps);
  c.n_ticks = j.value("n_ticks", c.n_ticks);
  c.spinup_ticks = j.value("spinup_ticks", c.spinup_ticks);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.seed = j.value("seed", c.seed);
}

json network_json(const DenoiserConfig& c) {
  return {{"n_lat", c.n_lat},
          {"n_lon", c.n_lon},
          {"n_vars", c.n_vars},
          {"n_forcings", c.n_forcings},
          {"hidden_dim", c.hidden_dim},
          {"n_blocks", c.n_blocks},
          {"embed_dim", c.embed_dim},
          {"sin_features", c.sin_features},
          {"mlp_ratio", c.mlp_ratio},
          {"kernel_width", c.kernel_width},
          {"coarse_factor", c.coarse_factor},
          {"n_deltas", c.n_deltas},
          {"mixing", mixing_kind_name(c.mixing)},
          {"min_period", c.min_period},
          {"max_period", c.max_period},
          {"ln_eps", c.ln_eps},
          {"init_std", c.init_std}};
}

void network_from(const json& j, DenoiserConfig& c) {
  c.n_lat = j.value("n_lat", c.n_lat);
  c.n_lon = j.value("n_lon", c.n_lon);
  c.n_vars = j.value("n_vars", c.n_vars);
  c.n_forcings = j.value("n_forcings", c.n_forcings);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.sin_features = j.value("sin_features", c.sin_features);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.kernel_width = j.value("kernel_width", c.kernel_width);
  c.coarse_factor = j.value("coarse_factor", c.coarse_factor);
  c.n_deltas = j.value("n_deltas", c.n_deltas);
  if (j.contains("mixing")) c.mixing = mixing_kind_from_name(j.at("mixing").get<std::string>());
  c.min_period = j.value("min_period", c.min_period);
  c.max_period = j.value("max_period", c.max_period);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.init_std = j.value("init_std", c.init_std);
}

json adamw_json(const AdamWConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay}};
}

void adamw_from(const json& j, AdamWConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

json muon_json(const MuonConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"momentum", c.momentum},
          {"ns_iters", c.ns_iters},
          {"companion", adamw_json(c.companion)}};
}

void muon_from(const json& j, MuonConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.ns_iters = j.value("ns_iters", c.ns_iters);
  if (j.contains("companion")) adamw_from(j.at("companion"), c.companion);
}

json pretrain_json(const PretrainConfig& c) {
  return {{"total_images", c.total_images},
          {"batch_size", c.batch_size},
          {"warmup_frac", c.warmup_frac},
          {"ema_halflife_frac", c.ema_halflife_frac},
          {"tangent_ramp_frac", c.tangent_ramp_frac},
          {"tangent_c", c.tangent_c},
          {"lr_min_fraction", c.lr_min_fraction},
          {"adamw", adamw_json(c.adamw)},
          {"muon", muon_json(c.muon)},
          {"cm_optimizer", c.cm_optimizer},
          {"n_threads", c.n_threads},
          {"log_every_images", c.log_every_images}};
}

void pretrain_from(const json& j, PretrainConfig& c) {
  c.total_images = j.value("total_images", c.total_images);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
  c.ema_halflife_frac = j.value("ema_halflife_frac", c.ema_halflife_frac);
  c.tangent_ramp_frac = j.value("tangent_ramp_frac", c.tangent_ramp_frac);
  c.tangent_c = j.value("tangent_c", c.tangent_c);
  c.lr_min_fraction = j.value("lr_min_fraction", c.lr_min_fraction);
  if (j.contains("adamw")) adamw_from(j.at("adamw"), c.adamw);
  if (j.contains("muon")) muon_from(j.at("muon"), c.muon);
  c.cm_optimizer = j.value("cm_optimizer", c.cm_optimizer);
  if (c.cm_optimizer != "muon" && c.cm_optimizer != "adamw")
    contract_error("config: cm_optimizer must be muon or adamw");
  c.n_threads = j.value("n_threads", c.n_threads);
  c.log_every_images = j.value("log_every_images", c.log_every_images);
}

json finetune_json(const FinetuneConfig& c) {
  json stages = json::array();
  for (const auto& s : c.curriculum) stages.push_back({{"k_set", s.k_set}, {"frac", s.frac}});
  return {{"total_images", c.total_images},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"adamw", adamw_json(c.adamw)},
          {"curriculum", stages},
          {"n_threads", c.n_threads},
          {"log_every_images", c.log_every_images}};
}

void finetune_from(const json& j, FinetuneConfig& c) {
  c.total_images = j.value("total_images", c.total_images);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("adamw")) adamw_from(j.at("adamw"), c.adamw);
  if (j.contains("curriculum")) {
    c.curriculum.clear();
    for (const auto& s : j.at("curriculum")) {
      FinetuneCurriculumStage st;
      st.k_set = s.at("k_set").get<std::vector<std::int64_t>>();
      st.frac = s.at("frac").get<double>();
      c.curriculum.push_back(std::move(st));
    }
  }
  c.n_threads = j.value("n_threads", c.n_threads);
  c.log_every_images = j.value("log_every_images", c.log_every_images);
}

json forecast_json(const ForecastRunConfig& c) {
  return {{"n_members", c.n_members},
          {"ode_steps", c.ode_steps},
          {"ode_order", c.ode_order},
          {"n_threads", c.n_threads}};
}

void forecast_from(const json& j, ForecastRunConfig& c) {
  c.n_members = j.value("n_members", c.n_members);
  c.ode_steps = j.value("ode_steps", c.ode_steps);
  c.ode_order = j.value("ode_order", c.ode_order);
  c.n_threads = j.value("n_threads", c.n_threads);
}

json eval_json(const EvalConfig& c) {
  return {{"spectra_lead", c.spectra_lead},
          {"hovmoller_var", c.hovmoller_var},
          {"hovmoller_halfwidth", c.hovmoller_halfwidth}};
}

void eval_from(const json& j, EvalConfig& c) {
  c.spectra_lead = j.value("spectra_lead", c.spectra_lead);
  c.hovmoller_var = j.value("hovmoller_var", c.hovmoller_var);
  c.hovmoller_halfwidth = j.value("hovmoller_halfwidth", c.hovmoller_halfwidth);
}

json full_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"data", data_json(c.data)},
          {"network", network_json(c.network)},
          {"schedule", schedule_json(c.schedule)},
          {"alpha_clip", c.alpha_clip},
          {"kappa_level_floor", c.kappa_level_floor},
          {"pretrain", pretrain_json(c.pretrain)},
          {"finetune", finetune_json(c.finetune)},
          {"forecast", forecast_json(c.forecast)},
          {"eval", eval_json(c.eval)}};
}

void full_from(const json& j, RunConfig& c) {
  c.seed = j.value("seed", c.seed);
  if (j.contains("data")) data_from(j.at("data"), c.data);
  if (j.contains("network")) network_from(j.at("network"), c.network);
  if (j.contains("schedule")) schedule_from(j.at("schedule"), c.schedule);
  c.alpha_clip = j.value("alpha_clip", c.alpha_clip);
  c.kappa_level_floor = j.value("kappa_level_floor", c.kappa_level_floor);
  if (j.contains("pretrain")) pretrain_from(j.at("pretrain"), c.pretrain);
  if (j.contains("finetune")) finetune_from(j.at("finetune"), c.finetune);
  if (j.contains("forecast")) forecast_from(j.at("forecast"), c.forecast);
  if (j.contains("eval")) eval_from(j.at("eval"), c.eval);
}

}  // namespace

std::string mixing_kind_name(MixingKind k) {
  return k == MixingKind::separable_circular_conv ? "separable_circular_conv" : "dense_coarse";
}

MixingKind mixing_kind_from_name(const std::string& s) {
  if (s == "separable_circular_conv") return MixingKind::separable_circular_conv;
  if (s == "dense_coarse") return MixingKind::dense_coarse;
  contract_error("config: unknown mixing kind '" + s + "'");
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from_json_text(const std::string& text) {
  RunConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    contract_error(std::string("config: parse error: ") + e.what());
  }
  try {
    full_from(j, cfg);
  } catch (const std::exception& e) {
    contract_error(std::string("config: ") + e.what());
  }
  cfg.data.apply_defaults();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) contract_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return run_config_from_json_text(ss.str());
}

std::string run_config_json(const RunConfig& cfg) { return full_json(cfg).dump(2); }

std::string run_config_json_compact(const RunConfig& cfg) { return full_json(cfg).dump(); }

std::string config_hash_hex(const RunConfig& cfg) {
  const std::string s = full_json(cfg).dump();  // canonical: sorted keys, no spaces
  // FNV-1a 64
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LossWeights loss_weights_for(const RunConfig& cfg) {
  return make_loss_weights(cfg.data.n_vars, cfg.data.n_surface_vars, cfg.data.n_lat,
                           cfg.alpha_clip, cfg.kappa_level_floor);
}

Curriculum curriculum_for(const RunConfig& cfg) {
  Curriculum c;
  const auto total = cfg.finetune.total_images;
  for (const auto& st : cfg.finetune.curriculum) {
    CurriculumStage stage;
    stage.k_set = st.k_set;
    stage.images = std::max<std::int64_t>(1, static_cast<std::int64_t>(st.frac * total));
    c.stages.push_back(std::move(stage));
  }
  c.validate();
  return c;
}

LrSchedule pretrain_lr_schedule(const RunConfig& cfg, double max_lr) {
  LrSchedule s;
  s.max_lr = max_lr;
  s.min_fraction = cfg.pretrain.lr_min_fraction;
  s.warmup_images = static_cast<std::int64_t>(cfg.pretrain.warmup_frac * cfg.pretrain.total_images);
  s.anneal_end_images = cfg.pretrain.total_images;
  s.finetune_lr = cfg.finetune.lr;
  return s;
}

}  // namespace gridcast
