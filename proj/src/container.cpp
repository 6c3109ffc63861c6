#include "gridcast/container.hpp"

#include <array>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gridcast {
namespace {

constexpr const char* kMagic = "gridcast-container";
constexpr int kVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void to_le_bytes(const float* src, std::size_t n, std::vector<unsigned char>& out) {
  out.resize(n * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t u = std::bit_cast<std::uint32_t>(src[i]);
      out[4 * i + 0] = static_cast<unsigned char>(u & 0xff);
      out[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
      out[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
      out[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
    }
  }
}

void from_le_bytes(const unsigned char* src, std::size_t n_floats, float* out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, src, n_floats * 4);
  } else {
    for (std::size_t i = 0; i < n_floats; ++i) {
      const std::uint32_t u = static_cast<std::uint32_t>(src[4 * i]) |
                              (static_cast<std::uint32_t>(src[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(src[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(src[4 * i + 3]) << 24);
      out[i] = std::bit_cast<float>(u);
    }
  }
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t n) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

bool Container::has(const std::string& key) const {
  for (const auto& [k, v] : manifest)
    if (k == key) return true;
  return false;
}

const std::string& Container::get(const std::string& key) const {
  for (const auto& [k, v] : manifest)
    if (k == key) return v;
  contract_error("container: missing manifest key '" + key + "'");
}

std::int64_t Container::get_int(const std::string& key) const {
  return std::stoll(get(key));
}
double Container::get_double(const std::string& key) const { return std::stod(get(key)); }
std::uint64_t Container::get_uint(const std::string& key) const { return std::stoull(get(key)); }

std::vector<double> Container::get_doubles(const std::string& key) const {
  std::istringstream is(get(key));
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

std::vector<std::int64_t> Container::get_ints(const std::string& key) const {
  std::istringstream is(get(key));
  std::vector<std::int64_t> out;
  std::int64_t v;
  while (is >> v) out.push_back(v);
  return out;
}

void Container::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : manifest)
    if (k == key) {
      v = value;
      return;
    }
  manifest.emplace_back(key, value);
}

void Container::set_int(const std::string& key, std::int64_t v) { set(key, std::to_string(v)); }
void Container::set_double(const std::string& key, double v) { set(key, fmt_double(v)); }
void Container::set_uint(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }

void Container::set_doubles(const std::string& key, const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += fmt_double(v[i]);
  }
  set(key, s);
}

void Container::set_ints(const std::string& key, const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  set(key, s);
}

const Container::Section& Container::section(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return s;
  contract_error("container: missing section '" + name + "'");
}

Container::Section& Container::add_section(const std::string& name, Shape dims) {
  Section s;
  s.name = name;
  s.dims = std::move(dims);
  s.data.assign(static_cast<std::size_t>(shape_numel(s.dims)), 0.0f);
  sections.push_back(std::move(s));
  return sections.back();
}

void write_container(const std::string& path, const Container& c) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) contract_error("container: cannot open '" + path + "' for writing");
  f << kMagic << ' ' << kVersion << '\n';
  f << "kind " << c.kind << '\n';
  for (const auto& [k, v] : c.manifest) f << "m " << k << ' ' << v << '\n';

  std::vector<std::vector<unsigned char>> blobs;
  for (const auto& s : c.sections) {
    std::vector<unsigned char> bytes;
    to_le_bytes(s.data.data(), s.data.size(), bytes);
    f << "s " << s.name;
    f << ' ' << s.dims.size();
    for (auto d : s.dims) f << ' ' << d;
    f << ' ' << crc32(bytes.data(), bytes.size()) << '\n';
    blobs.push_back(std::move(bytes));
  }
  f << "end\n";
  for (const auto& b : blobs)
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) contract_error("container: write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) contract_error("container: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(f, line)) contract_error("container: empty file '" + path + "'");
  {
    std::istringstream is(line);
    std::string magic;
    int version = -1;
    is >> magic >> version;
    if (magic != kMagic) contract_error("container: bad magic in '" + path + "'");
    if (version != kVersion)
      contract_error("container: unsupported version " + std::to_string(version));
  }

  Container c;
  std::vector<std::uint32_t> crcs;
  while (std::getline(f, line)) {
    if (line == "end") break;
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "kind") {
      is >> c.kind;
    } else if (tag == "m") {
      std::string key;
      is >> key;
      std::string value;
      std::getline(is, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      c.manifest.emplace_back(key, value);
    } else if (tag == "s") {
      Container::Section s;
      std::size_t rank = 0;
      is >> s.name >> rank;
      s.dims.resize(rank);
      for (auto& d : s.dims) is >> d;
      std::uint32_t crc = 0;
      is >> crc;
      if (!is) contract_error("container: malformed section header in '" + path + "'");
      crcs.push_back(crc);
      c.sections.push_back(std::move(s));
    } else {
      contract_error("container: unknown header line '" + line + "'");
    }
  }

  for (std::size_t i = 0; i < c.sections.size(); ++i) {
    auto& s = c.sections[i];
    const std::size_t n = static_cast<std::size_t>(shape_numel(s.dims));
    std::vector<unsigned char> bytes(n * 4);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(f.gcount()) != bytes.size())
      contract_error("container: truncated payload in section '" + s.name + "'");
    if (crc32(bytes.data(), bytes.size()) != crcs[i])
      contract_error("container: checksum mismatch in section '" + s.name + "'");
    s.data.resize(n);
    from_le_bytes(bytes.data(), n, s.data.data());
  }
  return c;
}

// ----------------------------------------------------------------- dataset

void save_dataset(const std::string& path, const TrajectoryDataset& data) {
  const auto& cfg = data.cfg;
  Container c;
  c.kind = "dataset";
  c.set_int("n_lat", cfg.n_lat);
  c.set_int("n_lon", cfg.n_lon);
  c.set_int("n_vars", cfg.n_vars);
  c.set_int("n_surface_vars", cfg.n_surface_vars);
  c.set_doubles("advect_lon", cfg.advect_lon);
  c.set_doubles("advect_lat", cfg.advect_lat);
  c.set_doubles("diffusion", cfg.diffusion);
  c.set_double("coupling", cfg.coupling);
  c.set_double("reaction_forcing", cfg.reaction_forcing);
  c.set_double("seasonal_amp", cfg.seasonal_amp);
  c.set_double("diurnal_amp", cfg.diurnal_amp);
  c.set_double("seasonal_period_ticks", cfg.seasonal_period_ticks);
  c.set_double("diurnal_period_ticks", cfg.diurnal_period_ticks);
  c.set_double("oro_amp", cfg.oro_amp);
  c.set_double("tick_dt", cfg.tick_dt);
  c.set_int("substeps", cfg.substeps);
  c.set_int("n_ticks", cfg.n_ticks);
  c.set_int("spinup_ticks", cfg.spinup_ticks);
  c.set_double("train_frac", cfg.train_frac);
  c.set_double("val_frac", cfg.val_frac);
  c.set_uint("seed", cfg.seed);
  c.set_double("ic_perturb", cfg.ic_perturb);
  c.set_uint("ic_perturb_seed", cfg.ic_perturb_seed);
  c.set_ints("split_train", {data.train.begin, data.train.end});
  c.set_ints("split_val", {data.val.begin, data.val.end});
  c.set_ints("split_test", {data.test.begin, data.test.end});
  c.set_doubles("stats_full_mean", data.stats.full_mean);
  c.set_doubles("stats_full_std", data.stats.full_std);
  c.set_ints("stats_deltas", data.stats.deltas);
  for (std::size_t i = 0; i < data.stats.deltas.size(); ++i) {
    c.set_doubles("stats_res_mean_" + std::to_string(i), data.stats.res_mean[i]);
    c.set_doubles("stats_res_std_" + std::to_string(i), data.stats.res_std[i]);
  }

  auto& st = c.add_section("states", {cfg.n_ticks, cfg.n_vars, cfg.n_lat, cfg.n_lon});
  st.data = data.states;
  auto& oro = c.add_section("orography", {cfg.n_lat, cfg.n_lon});
  oro.data = data.orography;
  auto& mask = c.add_section("land_mask", {cfg.n_lat, cfg.n_lon});
  mask.data = data.land_mask;
  write_container(path, c);
}

TrajectoryDataset load_dataset(const std::string& path) {
  Container c = read_container(path);
  if (c.kind != "dataset") contract_error("load_dataset: '" + path + "' is a " + c.kind);
  TrajectoryDataset data;
  auto& cfg = data.cfg;
  cfg.n_lat = c.get_int("n_lat");
  cfg.n_lon = c.get_int("n_lon");
  cfg.n_vars = c.get_int("n_vars");
  cfg.n_surface_vars = c.get_int("n_surface_vars");
  cfg.advect_lon = c.get_doubles("advect_lon");
  cfg.advect_lat = c.get_doubles("advect_lat");
  cfg.diffusion = c.get_doubles("diffusion");
  cfg.coupling = c.get_double("coupling");
  cfg.reaction_forcing = c.get_double("reaction_forcing");
  cfg.seasonal_amp = c.get_double("seasonal_amp");
  cfg.diurnal_amp = c.get_double("diurnal_amp");
  cfg.seasonal_period_ticks = c.get_double("seasonal_period_ticks");
  cfg.diurnal_period_ticks = c.get_double("diurnal_period_ticks");
  cfg.oro_amp = c.get_double("oro_amp");
  cfg.tick_dt = c.get_double("tick_dt");
  cfg.substeps = static_cast<int>(c.get_int("substeps"));
  cfg.n_ticks = c.get_int("n_ticks");
  cfg.spinup_ticks = c.get_int("spinup_ticks");
  cfg.train_frac = c.get_double("train_frac");
  cfg.val_frac = c.get_double("val_frac");
  cfg.seed = c.get_uint("seed");
  cfg.ic_perturb = c.get_double("ic_perturb");
  cfg.ic_perturb_seed = c.get_uint("ic_perturb_seed");
  auto tr = c.get_ints("split_train"), va = c.get_ints("split_val"), te = c.get_ints("split_test");
  data.train = {tr[0], tr[1]};
  data.val = {va[0], va[1]};
  data.test = {te[0], te[1]};
  data.stats.full_mean = c.get_doubles("stats_full_mean");
  data.stats.full_std = c.get_doubles("stats_full_std");
  data.stats.deltas = c.get_ints("stats_deltas");
  for (std::size_t i = 0; i < data.stats.deltas.size(); ++i) {
    data.stats.res_mean.push_back(c.get_doubles("stats_res_mean_" + std::to_string(i)));
    data.stats.res_std.push_back(c.get_doubles("stats_res_std_" + std::to_string(i)));
  }
  data.states = c.section("states").data;
  data.orography = c.section("orography").data;
  data.land_mask = c.section("land_mask").data;
  return data;
}

// ---------------------------------------------------------------- forecast

void save_forecast(const std::string& path, const EnsembleForecast& ens) {
  Container c;
  c.kind = "forecast";
  c.set_int("n_members", ens.n_members);
  c.set_int("n_steps", ens.n_steps);
  c.set_int("n_vars", ens.n_vars);
  c.set_int("n_lat", ens.n_lat);
  c.set_int("n_lon", ens.n_lon);
  c.set_int("delta", ens.delta);
  c.set_int("delta_index", ens.delta_index);
  c.set_int("init_time", ens.init_time);
  c.set_uint("base_seed", ens.base_seed);
  c.set_int("nfe_total", ens.nfe_total);
  std::string seeds;
  for (std::size_t i = 0; i < ens.member_seeds.size(); ++i) {
    if (i) seeds += ' ';
    seeds += std::to_string(ens.member_seeds[i]);
  }
  c.set("member_seeds", seeds);
  auto& s = c.add_section("fields", {ens.n_members, ens.n_steps, ens.n_vars, ens.n_lat, ens.n_lon});
  s.data = ens.fields;
  write_container(path, c);
}

EnsembleForecast load_forecast(const std::string& path) {
  Container c = read_container(path);
  if (c.kind != "forecast") contract_error("load_forecast: '" + path + "' is a " + c.kind);
  EnsembleForecast ens;
  ens.n_members = c.get_int("n_members");
  ens.n_steps = c.get_int("n_steps");
  ens.n_vars = c.get_int("n_vars");
  ens.n_lat = c.get_int("n_lat");
  ens.n_lon = c.get_int("n_lon");
  ens.delta = c.get_int("delta");
  ens.delta_index = c.get_int("delta_index");
  ens.init_time = c.get_int("init_time");
  ens.base_seed = c.get_uint("base_seed");
  ens.nfe_total = c.get_int("nfe_total");
  {
    std::istringstream is(c.get("member_seeds"));
    std::uint64_t v;
    while (is >> v) ens.member_seeds.push_back(v);
  }
  ens.fields = c.section("fields").data;
  if (static_cast<std::int64_t>(ens.fields.size()) !=
      ens.n_members * ens.n_steps * ens.field_numel())
    contract_error("load_forecast: field payload length mismatch");
  return ens;
}

}  // namespace gridcast
