#include "mrtl/config.hpp"

#include <cstdio>
#include <fstream>

#include "mrtl/error.hpp"

namespace mrtl {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

ojson regularization_defaults(double lambda) {
  return ojson{{"lambda", lambda}, {"l2_weight", 1.0}, {"spatial_weight", 1.0}, {"sigma", 0.05}, {"sparsify_below", 0.0}};
}

// Schema = defaults plus the alternative data source.
ojson schema() {
  ojson s = default_config();
  s["data"]["csv"] = ojson{{"path", ""}, {"kind", "categorical"}};
  return s;
}

void check_keys(const json& user, const ojson& ref, const std::string& path) {
  if (!user.is_object()) throw SchemaError("config: '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!ref.contains(it.key())) throw SchemaError("config: unknown key '" + key + "'");
    const ojson& sub = ref.at(it.key());
    if (key == "ladder.modes") {
      if (!it.value().is_array() || it.value().empty()) throw SchemaError("config: 'ladder.modes' must be a nonempty array");
      for (const auto& m : it.value()) check_keys(m, sub.at(0), key + "[]");
    } else if (sub.is_object()) {
      check_keys(it.value(), sub, key);
    }
  }
}

// Objects merge key by key; everything else replaces.
void merge(ojson& base, const json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

template <class T>
T as(const ojson& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("config: '" + what + "' has the wrong type");
  }
}

std::size_t as_count(const ojson& j, const std::string& what) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw SchemaError("config: '" + what + "' must be an integer");
  const auto v = j.get<long long>();
  if (v < 0) throw SchemaError("config: '" + what + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::uint64_t as_u64(const ojson& j, const std::string& what) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw SchemaError("config: '" + what + "' must be an integer");
  if (j.is_number_integer() && j.get<long long>() < 0) throw SchemaError("config: '" + what + "' must be nonnegative");
  return j.get<std::uint64_t>();
}

RegConfig parse_reg(const ojson& j, const std::string& what) {
  RegConfig r;
  r.lambda = as<double>(j.at("lambda"), what + ".lambda");
  r.l2_weight = as<double>(j.at("l2_weight"), what + ".l2_weight");
  r.spatial_weight = as<double>(j.at("spatial_weight"), what + ".spatial_weight");
  r.sigma = as<double>(j.at("sigma"), what + ".sigma");
  r.sparsify_below = as<double>(j.at("sparsify_below"), what + ".sparsify_below");
  r.validate();
  return r;
}

ResolutionLadder parse_ladder(const ojson& j) {
  ResolutionLadder l;
  l.r0 = as_count(j.at("r0"), "ladder.r0");
  const auto& modes = j.at("modes");
  std::size_t count = 0;
  for (std::size_t s = 0; s < modes.size(); ++s) {
    const auto& m = modes[s];
    std::vector<std::pair<double, double>> extent;
    for (const auto& e : m.at("extent")) {
      if (!e.is_array() || e.size() != 2) throw SchemaError("config: extent entries must be [min, max] pairs");
      extent.emplace_back(as<double>(e[0], "extent"), as<double>(e[1], "extent"));
    }
    const auto& levels = m.at("levels");
    if (!levels.is_array() || levels.empty()) throw SchemaError("config: each ladder mode needs a nonempty 'levels' array");
    if (s == 0) {
      count = levels.size();
      l.levels.resize(count);
    } else if (levels.size() != count) {
      throw SchemaError("config: all ladder modes need the same number of levels");
    }
    for (std::size_t r = 0; r < count; ++r) {
      std::vector<std::size_t> dims;
      for (const auto& d : levels[r]) dims.push_back(as_count(d, "ladder level dims"));
      GridSpec g{dims, extent};
      try {
        g.validate();
      } catch (const ShapeError& e) {
        throw SchemaError(std::string("config: ") + e.what());
      }
      l.levels[r].push_back(std::move(g));
    }
  }
  try {
    l.validate();
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  return l;
}

void refresh(RunConfig& c) {
  c.effective["seed"] = c.seed;
  c.effective["output_dir"] = c.output_dir.string();
}

}  // namespace

ojson default_config() {
  ojson d;
  d["task"] = "classification";
  d["seed"] = 0;
  d["output_dir"] = "out";
  d["ladder"] = ojson{{"r0", 2},
                      {"modes", ojson::array({ojson{{"extent", ojson::array({ojson::array({0.0, 1.0}), ojson::array({0.0, 1.0})})},
                                                    {"levels", ojson::array({ojson::array({4, 5}), ojson::array({8, 10}),
                                                                             ojson::array({16, 20}), ojson::array({32, 40})})}}})}};
  d["model"] = ojson{{"outputs", 6}, {"features", 4}, {"rank", 5}, {"activation", "sigmoid"}};
  d["optimizer"] = ojson{{"algorithm", "adam"}, {"eta_full", 0.02}, {"eta_low", 0.001}, {"beta1", 0.9},
                         {"beta2", 0.999},      {"eps", 1e-8},       {"batch_size", 256}, {"lr_decay_gamma", 0.95}};
  d["regularization"] = ojson{{"full", regularization_defaults(1e-5)}, {"low", regularization_defaults(1e-5)}};
  d["criterion"] = ojson{{"kind", "val_loss"}, {"patience", 2}, {"c0", 1e-4}, {"tau", 0.0}};
  d["training"] = ojson{{"min_epochs_per_level", 2}, {"max_epochs_per_level", 30}, {"scheme", "nearest"},
                        {"cp_max_iters", 500},       {"cp_fit_tol", 1e-10},       {"cp_fit_floor", 0.5},
                        {"init", "mrtl"},            {"random_init_scale", 0.1},  {"beta", 0.0},
                        {"literal_beta", false},     {"mac_budget", 0}};
  d["data"] = ojson{{"synthetic", ojson{{"seed", nullptr},
                                        {"samples", 20000},
                                        {"true_rank", 5},
                                        {"smoothness", 0.15},
                                        {"bumps", 2},
                                        {"noise_sigma", 0.0},
                                        {"signal_scale", 6.0},
                                        {"bias", -1.0}}}};
  return d;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  const ojson sch = schema();
  check_keys(doc, sch, "");
  if (doc.contains("data")) {
    const auto& data = doc.at("data");
    if (data.contains("synthetic") == data.contains("csv"))
      throw SchemaError("config: 'data' needs exactly one of 'synthetic' or 'csv'");
  }

  ojson eff = default_config();
  if (doc.contains("data") && doc.at("data").contains("csv")) eff["data"] = ojson{{"csv", sch["data"]["csv"]}};
  merge(eff, doc);

  RunConfig c;
  try {
    c.task = parse_task(as<std::string>(eff.at("task"), "task"));
    c.seed = as_u64(eff.at("seed"), "seed");
    c.output_dir = as<std::string>(eff.at("output_dir"), "output_dir");
    c.ladder = parse_ladder(eff.at("ladder"));

    const auto& m = eff.at("model");
    c.outputs = as_count(m.at("outputs"), "model.outputs");
    c.features = as_count(m.at("features"), "model.features");
    if (c.outputs < 1 || c.features < 1) throw SchemaError("config: model outputs and features must be at least 1");
    TrainConfig& t = c.train;
    t.task = c.task;
    t.outputs = c.outputs;
    t.rank = as_count(m.at("rank"), "model.rank");
    const Activation act = parse_activation(as<std::string>(m.at("activation"), "model.activation"));
    if (act != t.activation())
      throw SchemaError("config: activation '" + to_string(act) + "' does not match task '" + to_string(c.task) + "'");

    const auto& o = eff.at("optimizer");
    t.optim.algorithm = parse_optim(as<std::string>(o.at("algorithm"), "optimizer.algorithm"));
    t.optim.eta_full = as<double>(o.at("eta_full"), "optimizer.eta_full");
    t.optim.eta_low = as<double>(o.at("eta_low"), "optimizer.eta_low");
    t.optim.beta1 = as<double>(o.at("beta1"), "optimizer.beta1");
    t.optim.beta2 = as<double>(o.at("beta2"), "optimizer.beta2");
    t.optim.eps = as<double>(o.at("eps"), "optimizer.eps");
    t.optim.batch_size = as_count(o.at("batch_size"), "optimizer.batch_size");
    t.optim.lr_decay_gamma = as<double>(o.at("lr_decay_gamma"), "optimizer.lr_decay_gamma");
    t.optim.seed = c.seed;

    t.reg_full = parse_reg(eff.at("regularization").at("full"), "regularization.full");
    t.reg_low = parse_reg(eff.at("regularization").at("low"), "regularization.low");

    const auto& cr = eff.at("criterion");
    t.criterion.kind = parse_criterion(as<std::string>(cr.at("kind"), "criterion.kind"));
    t.criterion.patience = as_count(cr.at("patience"), "criterion.patience");
    t.criterion.c0 = as<double>(cr.at("c0"), "criterion.c0");
    t.criterion.tau = as<double>(cr.at("tau"), "criterion.tau");

    const auto& tr = eff.at("training");
    t.min_epochs_per_level = as_count(tr.at("min_epochs_per_level"), "training.min_epochs_per_level");
    t.max_epochs_per_level = as_count(tr.at("max_epochs_per_level"), "training.max_epochs_per_level");
    t.scheme = parse_scheme(as<std::string>(tr.at("scheme"), "training.scheme"));
    t.cp_max_iters = as_count(tr.at("cp_max_iters"), "training.cp_max_iters");
    t.cp_fit_tol = as<double>(tr.at("cp_fit_tol"), "training.cp_fit_tol");
    t.cp_fit_floor = as<double>(tr.at("cp_fit_floor"), "training.cp_fit_floor");
    const std::string init = as<std::string>(tr.at("init"), "training.init");
    if (init != "mrtl" && init != "random") throw SchemaError("config: training.init must be 'mrtl' or 'random'");
    t.init = init == "mrtl" ? InitMode::mrtl : InitMode::random;
    t.random_init_scale = as<double>(tr.at("random_init_scale"), "training.random_init_scale");
    t.beta = as<double>(tr.at("beta"), "training.beta");
    t.literal_beta = as<bool>(tr.at("literal_beta"), "training.literal_beta");
    t.mac_budget = as_u64(tr.at("mac_budget"), "training.mac_budget");
    t.seed = c.seed;
    t.validate();

    const auto& data = eff.at("data");
    if (data.contains("synthetic")) {
      const auto& s = data.at("synthetic");
      c.synthetic = true;
      c.data_seed = s.at("seed").is_null() ? c.seed : as_u64(s.at("seed"), "data.synthetic.seed");
      SyntheticSpec& sp = c.synth;
      sp.task = c.task;
      sp.outputs = c.outputs;
      sp.features = c.features;
      sp.ladder = c.ladder;
      sp.samples = as_count(s.at("samples"), "data.synthetic.samples");
      sp.true_rank = as_count(s.at("true_rank"), "data.synthetic.true_rank");
      sp.smoothness = as<double>(s.at("smoothness"), "data.synthetic.smoothness");
      sp.bumps = as_count(s.at("bumps"), "data.synthetic.bumps");
      sp.noise_sigma = as<double>(s.at("noise_sigma"), "data.synthetic.noise_sigma");
      sp.signal_scale = as<double>(s.at("signal_scale"), "data.synthetic.signal_scale");
      sp.bias = as<double>(s.at("bias"), "data.synthetic.bias");
      sp.seed = c.data_seed;
      sp.validate();
    } else {
      const auto& s = data.at("csv");
      c.synthetic = false;
      c.data_seed = c.seed;
      std::filesystem::path p = as<std::string>(s.at("path"), "data.csv.path");
      if (p.empty()) throw SchemaError("config: data.csv.path is empty");
      c.csv_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      const std::string kind = as<std::string>(s.at("kind"), "data.csv.kind");
      if (kind != "categorical" && kind != "continuous")
        throw SchemaError("config: data.csv.kind must be 'categorical' or 'continuous'");
      c.csv_kind = kind == "categorical" ? DownsampleKind::categorical : DownsampleKind::continuous;
      if (c.ladder.spatial_modes() != 1) throw SchemaError("config: CSV data supports one spatial mode");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  c.effective = std::move(eff);
  refresh(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

void override_seed(RunConfig& c, std::uint64_t seed) {
  const bool data_follows = c.synthetic && c.effective["data"]["synthetic"]["seed"].is_null();
  c.seed = seed;
  c.train.seed = seed;
  c.train.optim.seed = seed;
  if (data_follows || !c.synthetic) {
    c.data_seed = seed;
    c.synth.seed = seed;
  }
  refresh(c);
}

void override_output(RunConfig& c, const std::filesystem::path& out) {
  c.output_dir = out;
  refresh(c);
}

std::string config_hash(const ojson& doc) {
  ojson copy = doc;
  copy.erase("output_dir");
  const std::string s = copy.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset load_dataset(const RunConfig& c, GroundTruth* truth) {
  if (c.synthetic) {
    Synthetic s = generate(c.synth);
    if (truth) *truth = std::move(s.truth);
    return std::move(s.data);
  }
  CsvData csv = load_csv_dataset(c.csv_path, c.task, c.data_seed);
  const GridSpec& finest = c.ladder.levels.back().front();
  if (csv.grid.dims != finest.dims)
    throw SchemaError("CSV grid dims do not match the finest ladder level");
  Dataset d = std::move(csv.data);
  const auto full = d.x.front();
  d.x.clear();
  for (std::size_t r = 0; r + 1 < c.ladder.size(); ++r)
    d.x.push_back(std::make_shared<const DenseTensor>(
        downsample(*full, 2, finest, c.ladder.levels[r].front(), c.csv_kind)));
  d.x.push_back(full);
  if (full->dim(1) != c.features)
    throw SchemaError("CSV has " + std::to_string(full->dim(1)) + " features, config says " + std::to_string(c.features));
  return d;
}

}  // namespace mrtl
