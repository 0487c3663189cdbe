#include "mrtl/checkpoint.hpp"

#include <fstream>

#include "mrtl/error.hpp"
#include "mrtl/tensor_io.hpp"

namespace mrtl {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr const char* kFormat = "mrtl-checkpoint";
constexpr int kVersion = 1;

DenseTensor vector_tensor(const std::vector<double>& v) { return DenseTensor(Shape{v.size()}, v); }

std::vector<double> tensor_vector(const DenseTensor& t) {
  if (t.order() != 1) throw IoError("checkpoint: bias must be an order-1 tensor");
  return t.values();
}

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw IoError(std::string("checkpoint header lacks '") + key + "'");
  return j.at(key).get<T>();
}

}  // namespace

ojson trace_to_json(const TrainingTrace& t) {
  ojson epochs = ojson::array();
  for (const auto& e : t.epochs) {
    epochs.push_back({{"stage", to_string(e.stage)},
                      {"level", e.level},
                      {"epoch", e.epoch},
                      {"global_epoch", e.global_epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"objective", e.objective},
                      {"val_loss", e.val_loss},
                      {"grad_norm2", e.grad_norm2},
                      {"grad_var", e.grad_var},
                      {"grad_entropy", e.grad_entropy},
                      {"delta_norm", e.delta_norm},
                      {"macs", e.macs},
                      {"event", e.event}});
  }
  ojson trans = ojson::array();
  for (const auto& r : t.transitions) {
    trans.push_back({{"stage", to_string(r.stage)},
                     {"from_level", r.from_level},
                     {"to_level", r.to_level},
                     {"kind", r.kind},
                     {"trigger", r.trigger},
                     {"val_loss_before", r.val_loss_before},
                     {"val_loss_after", r.val_loss_after}});
  }
  return ojson{{"epochs", epochs}, {"transitions", trans}, {"warnings", t.warnings}, {"cp_fit", t.cp_fit}};
}

TrainingTrace trace_from_json(const json& j) {
  TrainingTrace t;
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.stage = parse_stage(e.at("stage").get<std::string>());
    r.level = e.at("level").get<std::size_t>();
    r.epoch = e.at("epoch").get<std::size_t>();
    r.global_epoch = e.at("global_epoch").get<std::size_t>();
    r.lr = e.at("lr").get<double>();
    r.train_loss = e.at("train_loss").get<double>();
    r.objective = e.at("objective").get<double>();
    r.val_loss = e.at("val_loss").get<double>();
    r.grad_norm2 = e.at("grad_norm2").get<double>();
    r.grad_var = e.at("grad_var").get<double>();
    r.grad_entropy = e.at("grad_entropy").get<double>();
    r.delta_norm = e.at("delta_norm").get<double>();
    r.macs = e.at("macs").get<std::uint64_t>();
    r.event = e.at("event").get<std::string>();
    if (e.contains("wall_seconds")) r.wall_seconds = e.at("wall_seconds").get<double>();
    t.epochs.push_back(std::move(r));
  }
  for (const auto& e : j.at("transitions")) {
    TransitionRecord r;
    r.stage = parse_stage(e.at("stage").get<std::string>());
    r.from_level = e.at("from_level").get<std::size_t>();
    r.to_level = e.at("to_level").get<std::size_t>();
    r.kind = e.at("kind").get<std::string>();
    r.trigger = e.at("trigger").get<std::string>();
    r.val_loss_before = e.at("val_loss_before").get<double>();
    r.val_loss_after = e.at("val_loss_after").get<double>();
    t.transitions.push_back(std::move(r));
  }
  t.warnings = j.at("warnings").get<std::vector<std::string>>();
  t.cp_fit = j.at("cp_fit").get<double>();
  return t;
}

void write_checkpoint(const std::filesystem::path& dir, const RunState& s) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  ojson h;
  h["format"] = kFormat;
  h["version"] = kVersion;
  h["kind"] = to_string(s.stage);
  h["level"] = s.level;
  h["resolution"] = s.level + 1;
  h["stage_epochs"] = s.stage_epochs;
  h["macs"] = s.macs;
  h["finished"] = s.finished;
  ojson grids = ojson::array();
  for (const auto& g : s.grids) {
    ojson ext = ojson::array();
    for (const auto& [lo, hi] : g.extent) ext.push_back({lo, hi});
    grids.push_back({{"dims", g.dims}, {"extent", ext}});
  }
  h["grids"] = grids;
  if (s.stage == Stage::full) {
    h["activation"] = to_string(s.full.activation);
    h["weight_shape"] = s.full.w.shape();
    write_tensor(dir / "w.mrtn", s.full.w);
    write_tensor(dir / "bias.mrtn", vector_tensor(s.full.bias));
    h["files"] = {"w.mrtn", "bias.mrtn"};
  } else {
    h["activation"] = to_string(s.low.activation);
    h["rank"] = s.low.rank();
    h["weight_shape"] = s.low.weight_shape();
    std::vector<std::string> files{"a.mrtn", "b.mrtn"};
    write_matrix(dir / "a.mrtn", s.low.a);
    write_matrix(dir / "b.mrtn", s.low.b);
    for (std::size_t i = 0; i < s.low.c.size(); ++i) {
      const std::string name = "c" + std::to_string(i) + ".mrtn";
      write_matrix(dir / name, s.low.c[i]);
      files.push_back(name);
    }
    write_tensor(dir / "bias.mrtn", vector_tensor(s.low.bias));
    files.push_back("bias.mrtn");
    h["spatial_modes"] = s.low.c.size();
    h["files"] = files;
  }
  h["optim_t"] = s.optim.t;
  if (!s.optim.m.empty()) {
    write_tensor(dir / "optim_m.mrtn", vector_tensor(s.optim.m));
    write_tensor(dir / "optim_v.mrtn", vector_tensor(s.optim.v));
  }
  h["trace"] = trace_to_json(s.trace);

  std::ofstream out(dir / "header.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "header.json").string());
  out << h.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / "header.json").string());
}

RunState read_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw IoError("cannot open checkpoint header in " + dir.string());
  json h;
  try {
    h = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (get<std::string>(h, "format") != kFormat) throw IoError("not an mrtl checkpoint: " + dir.string());
  RunState s;
  try {
    s.stage = parse_stage(get<std::string>(h, "kind"));
    s.level = get<std::size_t>(h, "level");
    s.stage_epochs = get<std::size_t>(h, "stage_epochs");
    s.macs = get<std::uint64_t>(h, "macs");
    s.finished = get<bool>(h, "finished");
    if (h.contains("grids")) {
      for (const auto& g : h.at("grids")) {
        GridSpec spec;
        spec.dims = g.at("dims").get<std::vector<std::size_t>>();
        for (const auto& e : g.at("extent")) spec.extent.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
        spec.validate();
        s.grids.push_back(std::move(spec));
      }
    }
    const Activation act = parse_activation(get<std::string>(h, "activation"));
    if (s.stage == Stage::full) {
      s.full.w = read_tensor(dir / "w.mrtn");
      s.full.bias = tensor_vector(read_tensor(dir / "bias.mrtn"));
      s.full.activation = act;
      if (s.full.bias.size() != s.full.outputs()) throw IoError("checkpoint: bias length mismatch");
    } else {
      s.low.a = read_matrix(dir / "a.mrtn");
      s.low.b = read_matrix(dir / "b.mrtn");
      const auto modes = get<std::size_t>(h, "spatial_modes");
      for (std::size_t i = 0; i < modes; ++i) s.low.c.push_back(read_matrix(dir / ("c" + std::to_string(i) + ".mrtn")));
      s.low.bias = tensor_vector(read_tensor(dir / "bias.mrtn"));
      s.low.activation = act;
      s.low.validate();
    }
    s.optim.t = h.value("optim_t", std::uint64_t{0});
    if (std::filesystem::exists(dir / "optim_m.mrtn")) {
      s.optim.m = tensor_vector(read_tensor(dir / "optim_m.mrtn"));
      s.optim.v = tensor_vector(read_tensor(dir / "optim_v.mrtn"));
      if (s.optim.m.size() != s.optim.v.size()) throw IoError("checkpoint: optimizer moment sizes differ");
    }
    s.trace = trace_from_json(h.at("trace"));
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  } catch (const ShapeError& e) {
    throw IoError("inconsistent checkpoint: " + std::string(e.what()));
  }
  return s;
}

}  // namespace mrtl
