// Command-line surface: dataset generation, the three training phases,
// forecasting, evaluation, and the gradient-integrity check.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gridcast/checkpoint.hpp"
#include "gridcast/config.hpp"
#include "gridcast/container.hpp"
#include "gridcast/gradcheck_suite.hpp"
#include "gridcast/scorecard.hpp"
#include "gridcast/trainer.hpp"

namespace {

using namespace gridcast;

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? default_run_config() : load_run_config(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  return cfg;
}

void log_run_header(const RunConfig& cfg, const char* command) {
  std::printf("[%s] config_hash=%s seed=%llu simd=%s\n", command, config_hash_hex(cfg).c_str(),
              static_cast<unsigned long long>(cfg.seed),
              kernels::isa_name(kernels::active_isa()));
}

int cmd_generate(const RunConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  TrajectoryDataset data = make_dataset(cfg.data);
  save_dataset(out, data);
  std::printf("dataset: %lld ticks, %lld vars, %lldx%lld grid -> %s (%.1fs)\n",
              static_cast<long long>(data.cfg.n_ticks), static_cast<long long>(data.cfg.n_vars),
              static_cast<long long>(data.cfg.n_lat), static_cast<long long>(data.cfg.n_lon),
              out.c_str(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& phase, const std::string& data_path,
              const std::string& out, const std::string& resume, std::int64_t images_override) {
  TrajectoryDataset data = load_dataset(data_path);
  TrainerState st;
  RunConfig active = cfg;
  if (!resume.empty()) {
    st = load_checkpoint(resume, &active);
    if (st.phase != phase)
      contract_error("resume: checkpoint phase '" + st.phase + "' does not match " + phase);
    std::printf("resumed %s at %lld images\n", phase.c_str(),
                static_cast<long long>(st.images_seen));
  } else {
    st = init_trainer(active, phase);
  }
  const std::int64_t target = images_override > 0 ? images_override
                              : phase == "finetune" ? active.finetune.total_images
                                                    : active.pretrain.total_images;
  TrainStats stats = train_phase(active, data, st, target, &std::cout);
  save_checkpoint(out, active, st);
  std::printf("%s: images=%lld loss=%.6g skipped=%lld wall=%.1fs -> %s\n", phase.c_str(),
              static_cast<long long>(st.images_seen), stats.last_loss,
              static_cast<long long>(stats.skipped_steps), stats.wall_seconds, out.c_str());
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& data_path, const std::string& in,
                 const std::string& out, std::int64_t images_override) {
  TrajectoryDataset data = load_dataset(data_path);
  RunConfig active = cfg;
  TrainerState base = load_checkpoint(in, &active);
  TrainerState st;
  st.phase = "finetune";
  st.images_seen = 0;
  st.model = std::move(base.model);  // weights + EMA continue; fresh optimizer
  const std::int64_t target =
      images_override > 0 ? images_override : active.finetune.total_images;
  TrainStats stats = train_phase(active, data, st, target, &std::cout);
  save_checkpoint(out, active, st);
  std::printf("finetune: images=%lld loss=%.6g skipped=%lld wall=%.1fs -> %s\n",
              static_cast<long long>(st.images_seen), stats.last_loss,
              static_cast<long long>(stats.skipped_steps), stats.wall_seconds, out.c_str());
  return 0;
}

int cmd_forecast(const RunConfig& cfg, const std::string& data_path, const std::string& ckpt,
                 const std::string& out, const std::string& sampler_name, std::int64_t members,
                 std::int64_t steps, std::int64_t delta, std::int64_t init_time, bool raw_weights) {
  TrajectoryDataset data = load_dataset(data_path);
  RunConfig active = cfg;
  TrainerState st = load_checkpoint(ckpt, &active);

  SamplerConfig sampler;
  if (sampler_name == "cm") {
    sampler.kind = SamplerConfig::Kind::consistency_single_step;
  } else if (sampler_name == "ode") {
    sampler.kind = SamplerConfig::Kind::pf_ode;
    sampler.ode_steps = active.forecast.ode_steps;
    sampler.ode_order = active.forecast.ode_order;
  } else {
    contract_error("forecast: unknown sampler '" + sampler_name + "' (want cm or ode)");
  }
  if (init_time < 0) init_time = data.test.begin;
  if (members <= 0) members = active.forecast.n_members;

  const std::int64_t delta_index = data.stats.delta_index(delta);
  ForcingsFn forcings = [&data](std::int64_t tick) {
    return data.forcings_at(static_cast<double>(tick));
  };
  const DenoiserParams<float>& params = raw_weights ? st.model.params : st.model.ema;

  const auto t0 = std::chrono::steady_clock::now();
  EnsembleForecast ens =
      ensemble_forecast(active.schedule, params, data.stats, data.state_at(init_time), forcings,
                        init_time, delta, delta_index, steps, sampler, active.seed, members,
                        active.forecast.n_threads);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_forecast(out, ens);
  std::printf("forecast: %lld members x %lld steps (delta %lld) nfe=%lld wall=%.2fs -> %s\n",
              static_cast<long long>(members), static_cast<long long>(steps),
              static_cast<long long>(delta), static_cast<long long>(ens.nfe_total), wall,
              out.c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& data_path, const std::string& fc_path,
                 const std::string& out_prefix) {
  TrajectoryDataset data = load_dataset(data_path);
  EnsembleForecast ens = load_forecast(fc_path);
  Scorecard sc = make_scorecard(ens, data, cfg);
  write_scorecard_json(out_prefix + ".json", sc);
  write_scorecard_csv(out_prefix + ".csv", sc);
  std::printf("evaluate: nfe=%lld wall=%.2fs -> %s.json %s.csv\n",
              static_cast<long long>(sc.nfe_total), sc.wall_seconds, out_prefix.c_str(),
              out_prefix.c_str());
  // quick look: first and last lead of variable 0
  if (!sc.rmse.empty()) {
    std::printf("  var0 rmse: lead1=%.4g leadK=%.4g\n", sc.rmse[0].front(), sc.rmse[0].back());
    if (!sc.crps.empty())
      std::printf("  var0 crps: lead1=%.4g leadK=%.4g\n", sc.crps[0].front(), sc.crps[0].back());
  }
  return 0;
}

int cmd_gradcheck() {
  int failures = 0;
  for (const auto& r : run_gradcheck_suite()) {
    std::printf("%-44s err=%-12.3g tol=%-8.0e %s\n", r.name.c_str(), r.error, r.tol,
                r.pass ? "PASS" : "FAIL");
    failures += r.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcast: consistency-model forecasting on a synthetic mini-atmosphere"};
  app.require_subcommand(1);

  CommonOpts common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run config JSON (defaults when omitted)");
    sub->add_option("--seed", common.seed, "override the config seed")
        ->each([&](const std::string&) { common.seed_set = true; });
  };

  std::string out, data_path, in_path, resume, fc_path, out_prefix;
  std::string sampler_name = "cm";
  std::int64_t members = 0, steps = 8, delta = 1, init_time = -1, images_override = 0;
  bool raw_weights = false;

  auto* gen = app.add_subcommand("generate-data", "simulate the mini-atmosphere dataset");
  add_common(gen);
  gen->add_option("--out", out, "output dataset container")->required();

  auto* td = app.add_subcommand("train-diffusion", "pretrain the diffusion baseline");
  add_common(td);
  td->add_option("--data", data_path)->required();
  td->add_option("--out", out)->required();
  td->add_option("--resume", resume, "checkpoint to continue from");
  td->add_option("--images", images_override, "override the image budget");

  auto* tc = app.add_subcommand("train-cm", "pretrain the consistency model");
  add_common(tc);
  tc->add_option("--data", data_path)->required();
  tc->add_option("--out", out)->required();
  tc->add_option("--resume", resume);
  tc->add_option("--images", images_override);

  auto* ft = app.add_subcommand("finetune", "CRPS finetuning of a pretrained consistency model");
  add_common(ft);
  ft->add_option("--data", data_path)->required();
  ft->add_option("--in", in_path, "base consistency checkpoint")->required();
  ft->add_option("--out", out)->required();
  ft->add_option("--images", images_override);

  auto* fc = app.add_subcommand("forecast", "generate an ensemble forecast");
  add_common(fc);
  fc->add_option("--data", data_path)->required();
  fc->add_option("--ckpt", in_path)->required();
  fc->add_option("--out", out)->required();
  fc->add_option("--sampler", sampler_name, "cm (1 NFE) or ode (multi-step baseline)");
  fc->add_option("--members", members);
  fc->add_option("--steps", steps);
  fc->add_option("--delta", delta);
  fc->add_option("--init", init_time, "initial tick (default: start of the test split)");
  fc->add_flag("--raw-weights", raw_weights, "use live weights instead of the EMA shadow");

  auto* ev = app.add_subcommand("evaluate", "score a forecast against the dataset");
  add_common(ev);
  ev->add_option("--data", data_path)->required();
  ev->add_option("--forecast", fc_path)->required();
  ev->add_option("--out-prefix", out_prefix)->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every objective");
  add_common(gc);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(common);
    if (gen->parsed()) {
      log_run_header(cfg, "generate-data");
      return cmd_generate(cfg, out);
    }
    if (td->parsed()) {
      log_run_header(cfg, "train-diffusion");
      return cmd_train(cfg, "diffusion", data_path, out, resume, images_override);
    }
    if (tc->parsed()) {
      log_run_header(cfg, "train-cm");
      return cmd_train(cfg, "consistency", data_path, out, resume, images_override);
    }
    if (ft->parsed()) {
      log_run_header(cfg, "finetune");
      return cmd_finetune(cfg, data_path, in_path, out, images_override);
    }
    if (fc->parsed()) {
      log_run_header(cfg, "forecast");
      return cmd_forecast(cfg, data_path, in_path, out, sampler_name, members, steps, delta,
                          init_time, raw_weights);
    }
    if (ev->parsed()) {
      log_run_header(cfg, "evaluate");
      return cmd_evaluate(cfg, data_path, fc_path, out_prefix);
    }
    if (gc->parsed()) {
      log_run_header(cfg, "gradcheck");
      return cmd_gradcheck();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
