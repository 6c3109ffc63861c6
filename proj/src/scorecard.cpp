#include "gridcast/scorecard.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridcast/weights.hpp"

namespace gridcast {
namespace {

using nlohmann::json;

json table_json(const std::vector<std::vector<double>>& t) {
  json out = json::array();
  for (const auto& row : t) {
    json r = json::array();
    for (double v : row) {
      if (std::isfinite(v)) r.push_back(v);
      else r.push_back(nullptr);  // missing value (e.g. zero-skill SSR)
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TruthSeq truth_for(const EnsembleForecast& ens, const TrajectoryDataset& data) {
  TruthSeq truth;
  for (std::int64_t k = 0; k < ens.n_steps; ++k) {
    const std::int64_t t = ens.init_time + (k + 1) * ens.delta;
    if (t >= data.n_ticks())
      contract_error("evaluate: forecast lead " + std::to_string(k + 1) +
                     " falls beyond the dataset");
    truth.push_back(data.state_at(t));
  }
  return truth;
}

Scorecard make_scorecard(const EnsembleForecast& ens, const TrajectoryDataset& data,
                         const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  TruthSeq truth = truth_for(ens, data);

  Scorecard sc;
  sc.n_members = ens.n_members;
  sc.delta = ens.delta;
  sc.init_time = ens.init_time;
  for (std::int64_t k = 1; k <= ens.n_steps; ++k) sc.leads.push_back(k);
  sc.rmse = rmse_latweighted(ens, truth);
  if (ens.n_members >= 2) {
    sc.crps = crps_score(ens, truth);
    SsrTable tab = ssr(ens, truth);
    sc.ssr = std::move(tab.corrected);
    sc.ssr_uncorrected = std::move(tab.uncorrected);
    sc.spread = std::move(tab.spread);
  }

  sc.spectra_lead = std::min<std::int64_t>(cfg.eval.spectra_lead, ens.n_steps);
  if (sc.spectra_lead >= 1) {
    sc.spectrum_model = power_spectrum(ens, sc.spectra_lead - 1);
    sc.spectrum_truth =
        power_spectrum_field(truth[static_cast<std::size_t>(sc.spectra_lead - 1)]);
  }

  // hovmoller band around the equator for member 0
  sc.hovmoller_var = cfg.eval.hovmoller_var;
  {
    Climatology clim = compute_climatology(data);
    const std::int64_t mid = ens.n_lat / 2;
    const std::int64_t lo = std::max<std::int64_t>(0, mid - cfg.eval.hovmoller_halfwidth);
    const std::int64_t hi = std::min<std::int64_t>(ens.n_lat, mid + cfg.eval.hovmoller_halfwidth);
    std::vector<Tensor<float>> member_states;
    for (std::int64_t k = 0; k < ens.n_steps; ++k) member_states.push_back(ens.state(0, k));
    sc.hovmoller_anomaly = hovmoller(member_states, sc.hovmoller_var, lo, hi, clim);
  }

  sc.config_hash = config_hash_hex(cfg);
  sc.seed = cfg.seed;
  sc.nfe_total = ens.nfe_total;
  sc.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sc;
}

void write_scorecard_json(const std::string& path, const Scorecard& sc) {
  json j{{"n_members", sc.n_members},
         {"delta", sc.delta},
         {"init_time", sc.init_time},
         {"leads", sc.leads},
         {"rmse", table_json(sc.rmse)},
         {"crps", table_json(sc.crps)},
         {"ssr", table_json(sc.ssr)},
         {"ssr_uncorrected", table_json(sc.ssr_uncorrected)},
         {"spread", table_json(sc.spread)},
         {"spectra_lead", sc.spectra_lead},
         {"spectrum_model", table_json(sc.spectrum_model)},
         {"spectrum_truth", table_json(sc.spectrum_truth)},
         {"hovmoller_var", sc.hovmoller_var},
         {"hovmoller_anomaly", table_json(sc.hovmoller_anomaly)},
         {"config_hash", sc.config_hash},
         {"seed", sc.seed},
         {"nfe_total", sc.nfe_total},
         {"wall_seconds", sc.wall_seconds}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) contract_error("scorecard: cannot open '" + path + "'");
  f << j.dump(2) << "\n";
}

void write_scorecard_csv(const std::string& path, const Scorecard& sc) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) contract_error("scorecard: cannot open '" + path + "'");
  f << "variable,lead,metric,value\n";
  auto emit = [&](const char* name, const std::vector<std::vector<double>>& tab) {
    for (std::size_t v = 0; v < tab.size(); ++v)
      for (std::size_t k = 0; k < tab[v].size(); ++k)
        f << v << ',' << sc.leads[k] << ',' << name << ',' << fmt(tab[v][k]) << "\n";
  };
  emit("rmse", sc.rmse);
  emit("crps", sc.crps);
  emit("ssr", sc.ssr);
  emit("ssr_uncorrected", sc.ssr_uncorrected);
  emit("spread", sc.spread);
}

std::vector<CsvRow> read_metric_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) contract_error("scorecard: cannot open '" + path + "'");
  std::vector<CsvRow> rows;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    CsvRow row;
    std::istringstream is(line);
    std::string field;
    std::getline(is, field, ',');
    row.variable = std::stoll(field);
    std::getline(is, field, ',');
    row.lead = std::stoll(field);
    std::getline(is, row.metric, ',');
    std::getline(is, field, ',');
    row.value = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<double>> persistence_rmse(const TrajectoryDataset& data,
                                                  std::int64_t init_time, std::int64_t delta,
                                                  std::int64_t n_steps) {
  const auto& cfg = data.cfg;
  const std::vector<double> w = metric_lat_weights(cfg.n_lat);
  const std::int64_t V = cfg.n_vars, H = cfg.n_lat, W = cfg.n_lon;
  Tensor<float> init = data.state_at(init_time);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(V),
                                       std::vector<double>(static_cast<std::size_t>(n_steps)));
  for (std::int64_t k = 0; k < n_steps; ++k) {
    Tensor<float> truth = data.state_at(init_time + (k + 1) * delta);
    for (std::int64_t v = 0; v < V; ++v) {
      double acc = 0;
      for (std::int64_t la = 0; la < H; ++la) {
        double row = 0;
        for (std::int64_t lo = 0; lo < W; ++lo) {
          const double e = static_cast<double>(init.data()[(v * H + la) * W + lo]) -
                           static_cast<double>(truth.data()[(v * H + la) * W + lo]);
          row += e * e;
        }
        acc += w[static_cast<std::size_t>(la)] * row;
      }
      out[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
          std::sqrt(acc / static_cast<double>(H * W));
    }
  }
  return out;
}

EvalResult evaluate_model(const RunConfig& cfg, const TrajectoryDataset& data,
                          const DenoiserParams<float>& params, const EvalOptions& opt) {
  const SplitRange range = opt.split == Split::train ? data.train
                           : opt.split == Split::val ? data.val
                                                     : data.test;
  const std::int64_t span = opt.n_steps * opt.delta;
  const std::int64_t last_start = range.end - 1 - span;
  if (last_start < range.begin) contract_error("evaluate_model: rollout does not fit in split");
  const std::int64_t stride =
      std::max<std::int64_t>(1, (last_start - range.begin) / std::max<std::int64_t>(1, opt.n_initials - 1));

  const std::int64_t delta_index = data.stats.delta_index(opt.delta);
  ForcingsFn forcings = [&data](std::int64_t tick) {
    return data.forcings_at(static_cast<double>(tick));
  };

  EvalResult res;
  const std::int64_t V = data.cfg.n_vars;
  auto zeros_tab = [&](std::vector<std::vector<double>>& t) {
    t.assign(static_cast<std::size_t>(V),
             std::vector<double>(static_cast<std::size_t>(opt.n_steps), 0.0));
  };
  zeros_tab(res.rmse);
  zeros_tab(res.crps);
  zeros_tab(res.ssr);
  zeros_tab(res.spread);
  zeros_tab(res.persistence);
  res.spectra_lead = std::min<std::int64_t>(cfg.eval.spectra_lead, opt.n_steps);

  std::int64_t done = 0;
  const auto t_start = std::chrono::steady_clock::now();
  for (std::int64_t i = 0; i < opt.n_initials; ++i) {
    const std::int64_t init_time = std::min(range.begin + i * stride, last_start);
    EnsembleForecast ens = ensemble_forecast(
        cfg.schedule, params, data.stats, data.state_at(init_time), forcings, init_time,
        opt.delta, delta_index, opt.n_steps, opt.sampler,
        mix_seed(opt.seed, static_cast<std::uint64_t>(i)), opt.n_members, opt.n_threads);
    res.nfe_total += ens.nfe_total;

    TruthSeq truth = truth_for(ens, data);
    auto add_tab = [&](std::vector<std::vector<double>>& acc,
                       const std::vector<std::vector<double>>& x) {
      for (std::size_t v = 0; v < acc.size(); ++v)
        for (std::size_t k = 0; k < acc[v].size(); ++k) acc[v][k] += x[v][k];
    };
    add_tab(res.rmse, rmse_latweighted(ens, truth));
    if (opt.n_members >= 2) {
      add_tab(res.crps, crps_score(ens, truth));
      SsrTable tab = ssr(ens, truth);
      add_tab(res.ssr, tab.corrected);
      add_tab(res.spread, tab.spread);
    }
    add_tab(res.persistence, persistence_rmse(data, init_time, opt.delta, opt.n_steps));

    if (res.spectra_lead >= 1) {
      auto sm = power_spectrum(ens, res.spectra_lead - 1);
      auto st = power_spectrum_field(truth[static_cast<std::size_t>(res.spectra_lead - 1)]);
      if (res.spectrum_model.empty()) {
        res.spectrum_model = std::move(sm);
        res.spectrum_truth = std::move(st);
      } else {
        add_tab(res.spectrum_model, sm);
        add_tab(res.spectrum_truth, st);
      }
    }
    ++done;
  }
  res.sampler_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  const double inv = 1.0 / static_cast<double>(done);
  auto scale_tab = [&](std::vector<std::vector<double>>& t) {
    for (auto& row : t)
      for (auto& v : row) v *= inv;
  };
  scale_tab(res.rmse);
  scale_tab(res.crps);
  scale_tab(res.ssr);
  scale_tab(res.spread);
  scale_tab(res.persistence);
  if (done > 1 && !res.spectrum_model.empty()) {
    scale_tab(res.spectrum_model);
    scale_tab(res.spectrum_truth);
  }
  return res;
}

}  // namespace gridcast
