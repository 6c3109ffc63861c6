#include "gridcast/checkpoint.hpp"

#include "gridcast/container.hpp"

namespace gridcast {
namespace {

std::int64_t flat_size(const DenoiserParams<float>& p) {
  std::int64_t n = 0;
  p.for_each([&](const char*, const Tensor<float>& t, ParamKind) { n += t.numel(); });
  return n;
}

void flatten(const DenoiserParams<float>& p, std::vector<float>& out) {
  out.clear();
  out.reserve(static_cast<std::size_t>(flat_size(p)));
  p.for_each([&](const char*, const Tensor<float>& t, ParamKind) {
    out.insert(out.end(), t.vec().begin(), t.vec().end());
  });
}

void unflatten(const std::vector<float>& in, DenoiserParams<float>& p) {
  std::size_t off = 0;
  p.for_each([&](const char* name, Tensor<float>& t, ParamKind) {
    if (off + t.vec().size() > in.size())
      contract_error(std::string("checkpoint: parameter payload too short at ") + name);
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(off), t.vec().size(), t.vec().begin());
    off += t.vec().size();
  });
  if (off != in.size()) contract_error("checkpoint: parameter payload length mismatch");
}

void flatten_list(const std::vector<Tensor<float>>& ts, std::vector<float>& out) {
  out.clear();
  for (const auto& t : ts) out.insert(out.end(), t.vec().begin(), t.vec().end());
}

// Shapes of the optimizer-state tensors, in slot order, for each routing.
std::vector<Shape> slot_shapes(const DenoiserParams<float>& p, bool muon_only, bool companion_only) {
  std::vector<Shape> shapes;
  p.for_each([&](const char*, const Tensor<float>& t, ParamKind kind) {
    const bool muon = muon_eligible(kind) && t.rank() == 2;
    if (muon_only && !muon) return;
    if (companion_only && muon) return;
    shapes.push_back(t.shape);
  });
  return shapes;
}

std::vector<Tensor<float>> unflatten_list(const std::vector<float>& in,
                                          const std::vector<Shape>& shapes) {
  std::vector<Tensor<float>> out;
  std::size_t off = 0;
  for (const auto& s : shapes) {
    Tensor<float> t = Tensor<float>::zeros(s);
    if (off + t.vec().size() > in.size())
      contract_error("checkpoint: optimizer payload too short");
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(off), t.vec().size(), t.vec().begin());
    off += t.vec().size();
    out.push_back(std::move(t));
  }
  if (off != in.size()) contract_error("checkpoint: optimizer payload length mismatch");
  return out;
}

void add_flat_section(Container& c, const std::string& name, const std::vector<float>& data) {
  auto& s = c.add_section(name, {static_cast<std::int64_t>(data.size())});
  s.data = data;
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainerState& st) {
  Container c;
  c.kind = "checkpoint";
  c.set("phase", st.phase);
  c.set_int("images_seen", st.images_seen);
  c.set_int("adam_steps", st.adam_steps);
  c.set_int("muon_adam_steps", st.muon_adam_steps);
  c.set("config_json", run_config_json_compact(cfg));

  std::vector<float> flat;
  flatten(st.model.params, flat);
  add_flat_section(c, "params", flat);
  flatten(st.model.ema, flat);
  add_flat_section(c, "ema", flat);

  flatten_list(st.adam_m, flat);
  add_flat_section(c, "adam_m", flat);
  flatten_list(st.adam_v, flat);
  add_flat_section(c, "adam_v", flat);
  flatten_list(st.muon_momentum, flat);
  add_flat_section(c, "muon_momentum", flat);
  flatten_list(st.muon_adam_m, flat);
  add_flat_section(c, "muon_adam_m", flat);
  flatten_list(st.muon_adam_v, flat);
  add_flat_section(c, "muon_adam_v", flat);

  write_container(path, c);
}

TrainerState load_checkpoint(const std::string& path, RunConfig* cfg_out) {
  Container c = read_container(path);
  if (c.kind != "checkpoint") contract_error("load_checkpoint: '" + path + "' is a " + c.kind);
  RunConfig cfg = run_config_from_json_text(c.get("config_json"));
  if (cfg_out) *cfg_out = cfg;

  TrainerState st;
  st.phase = c.get("phase");
  st.images_seen = c.get_int("images_seen");
  st.adam_steps = c.get_int("adam_steps");
  st.muon_adam_steps = c.get_int("muon_adam_steps");

  Rng dummy(0);
  st.model.params = init_params<float>(cfg.network, dummy);
  st.model.ema = st.model.params.clone();
  unflatten(c.section("params").data, st.model.params);
  unflatten(c.section("ema").data, st.model.ema);

  const auto all_shapes = slot_shapes(st.model.params, false, false);
  const auto muon_shapes = slot_shapes(st.model.params, true, false);
  const auto comp_shapes = slot_shapes(st.model.params, false, true);
  if (!c.section("adam_m").data.empty()) {
    st.adam_m = unflatten_list(c.section("adam_m").data, all_shapes);
    st.adam_v = unflatten_list(c.section("adam_v").data, all_shapes);
  }
  if (!c.section("muon_momentum").data.empty()) {
    st.muon_momentum = unflatten_list(c.section("muon_momentum").data, muon_shapes);
    st.muon_adam_m = unflatten_list(c.section("muon_adam_m").data, comp_shapes);
    st.muon_adam_v = unflatten_list(c.section("muon_adam_v").data, comp_shapes);
  }
  return st;
}

}  // namespace gridcast
