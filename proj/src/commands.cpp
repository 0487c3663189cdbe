#include "mrtl/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrtl/checkpoint.hpp"
#include "mrtl/config.hpp"
#include "mrtl/cp_decomp.hpp"
#include "mrtl/diagnostics.hpp"
#include "mrtl/error.hpp"
#include "mrtl/interp.hpp"
#include "mrtl/tensor_io.hpp"
#include "mrtl/trainer.hpp"

namespace mrtl {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + " is not valid JSON: " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Shared --config/--seed/--out handling.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void attach(CLI::App* app, bool with_config = true) {
    if (with_config) app->add_option("--config", config, "JSON run configuration");
    seed_opt = app->add_option("--seed", seed, "Seed override");
    out_opt = app->add_option("--out", out, "Output directory override");
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? parse_run_config(json::object()) : load_run_config(config);
    if (seed_opt->count()) override_seed(c, seed);
    if (out_opt->count()) override_output(c, out);
    return c;
  }
};

ojson manifest(const std::string& command, const RunConfig& c, const std::vector<std::string>& files) {
  return ojson{{"command", command},
               {"seed", c.seed},
               {"data_seed", c.data_seed},
               {"config_hash", config_hash(c.effective)},
               {"config", c.effective},
               {"files", files}};
}

// ---- generate ----

int cmd_generate(const Common& opt) {
  RunConfig c = opt.load();
  if (!c.synthetic) throw SchemaError("generate needs a data.synthetic configuration");
  GroundTruth truth;
  const Dataset d = load_dataset(c, &truth);
  const fs::path out = c.output_dir;
  ensure_dir(out);
  std::vector<std::string> files;
  for (std::size_t r = 0; r < d.x.size(); ++r) {
    const std::string name = "x_r" + std::to_string(r + 1) + ".mrtn";
    write_tensor(out / name, *d.x[r]);
    files.push_back(name);
  }

  std::vector<std::string> split_of(d.samples());
  for (auto i : d.split.train) split_of[i] = "train";
  for (auto i : d.split.val) split_of[i] = "val";
  for (auto i : d.split.test) split_of[i] = "test";
  std::ostringstream labels;
  labels << "id,output,label,split\n";
  for (std::size_t n = 0; n < d.samples(); ++n)
    labels << n << ',' << (d.output.empty() ? 0u : d.output[n]) << ',' << format_double(d.y[n]) << ','
           << split_of[n] << '\n';
  write_text(out / "labels.csv", labels.str());
  files.push_back("labels.csv");

  write_csv_matrix(out / "truth_a.csv", truth.a);
  write_csv_matrix(out / "truth_b.csv", truth.b);
  files.insert(files.end(), {"truth_a.csv", "truth_b.csv"});
  for (std::size_t r = 0; r < truth.c.size(); ++r)
    for (std::size_t s = 0; s < truth.c[r].size(); ++s) {
      const std::string name = "truth_c" + std::to_string(s) + "_r" + std::to_string(r + 1) + ".csv";
      write_csv_matrix(out / name, truth.c[r][s]);
      files.push_back(name);
    }
  write_csv_matrix(out / "truth_bias.csv", Matrix(1, truth.bias.size(), truth.bias));
  files.push_back("truth_bias.csv");

  write_text(out / "manifest.json", manifest("generate", c, files).dump(2) + "\n");
  std::cout << "wrote " << files.size() << " files to " << out.string() << "\n";
  return kExitOk;
}

// ---- train ----

struct Evaluation {
  double loss = 0.0;
  std::optional<double> f1;
};

Evaluation evaluate(const LowRankModel& m, const Dataset& d, const TrainConfig& cfg, const std::vector<std::size_t>& rows) {
  Evaluation e;
  if (rows.empty()) return e;
  const Batch b = d.batch(d.x.size() - 1);
  const std::vector<double> pred = forward_low(m, b, rows);
  std::vector<double> y;
  for (auto r : rows) y.push_back(d.y[r]);
  e.loss = evaluate_loss(make_loss(d, cfg), pred, y).value;
  if (cfg.task == TaskKind::classification) e.f1 = f1_score(pred, y);
  return e;
}

ojson per_resolution(const TrainingTrace& t) {
  ojson rows = ojson::array();
  std::uint64_t prev = 0;
  for (const auto& e : t.epochs) {
    const std::string stage = to_string(e.stage);
    if (rows.empty() || rows.back()["stage"] != stage || rows.back()["level"] != e.level)
      rows.push_back(ojson{{"stage", stage}, {"level", e.level}, {"resolution", e.level + 1}, {"epochs", 0},
                           {"final_val_loss", 0.0}, {"macs", 0}, {"event", ""}});
    auto& row = rows.back();
    row["epochs"] = row["epochs"].get<std::size_t>() + 1;
    row["final_val_loss"] = e.val_loss;
    row["macs"] = row["macs"].get<std::uint64_t>() + (e.macs - prev);
    row["event"] = e.event;
    prev = e.macs;
  }
  return rows;
}

int cmd_train(const Common& opt, bool fixed, const std::string& resume) {
  RunConfig c = opt.load();
  const Dataset d = load_dataset(c);
  const fs::path out = c.output_dir;
  ensure_dir(out);
  TrainConfig t = c.train;
  t.checkpoint_dir = out / "checkpoints";

  RunResult res;
  if (!resume.empty()) {
    res = fixed ? resume_mrtl(resume, final_level_ladder(c.ladder), final_level_data(d), t)
                : resume_mrtl(resume, c.ladder, d, t);
  } else {
    res = fixed ? run_fixed(c.ladder, d, t) : run_mrtl(c.ladder, d, t);
  }

  const Evaluation test = evaluate(res.model, d, t, d.split.test);
  const Evaluation val = evaluate(res.model, d, t, d.split.val);

  ojson s;
  s["format"] = "mrtl-summary";
  s["task"] = to_string(c.task);
  s["seed"] = c.seed;
  s["data_seed"] = c.data_seed;
  s["config_hash"] = config_hash(c.effective);
  s["final_val_loss"] = res.trace.final_val_loss();
  s["test_loss"] = test.loss;
  if (test.f1) {
    s["val_f1"] = *val.f1;
    s["test_f1"] = *test.f1;
  }
  s["total_macs"] = res.trace.total_macs();
  s["epochs"] = res.trace.epochs.size();
  s["cp_fit"] = res.trace.cp_fit;
  s["warnings"] = res.trace.warnings;
  s["per_resolution"] = per_resolution(res.trace);
  s["trace"] = trace_to_json(res.trace);

  ojson timing;
  ojson walls = ojson::array();
  for (const auto& e : res.trace.epochs) walls.push_back(e.wall_seconds);
  timing["epoch_wall_seconds"] = walls;
  timing["total_wall_seconds"] = res.trace.epochs.empty() ? 0.0 : res.trace.epochs.back().wall_seconds;

  write_text(out / "trace.csv", trace_csv(res.trace));
  write_text(out / "summary.json", s.dump(2) + "\n");
  write_text(out / "timing.json", timing.dump(2) + "\n");
  write_text(out / "manifest.json",
             manifest(fixed ? "train --fixed" : "train", c, {"trace.csv", "summary.json", "timing.json", "checkpoints"})
                     .dump(2) +
                 "\n");

  std::cout << "final validation loss " << format_double(res.trace.final_val_loss()) << ", test loss "
            << format_double(test.loss);
  if (test.f1) std::cout << ", test F1 " << format_double(*test.f1);
  std::cout << ", " << res.trace.total_macs() << " MACs over " << res.trace.epochs.size() << " epochs\n";
  for (const auto& w : res.trace.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

// ---- compare ----

TrainingTrace summary_trace(const fs::path& path, const json& s) {
  if (!s.contains("format") || s.at("format") != "mrtl-summary") throw SchemaError(path.string() + " is not a training summary");
  TrainingTrace t;
  try {
    t = trace_from_json(s.at("trace"));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": malformed trace: " + e.what());
  }
  const fs::path timing = path.parent_path() / "timing.json";
  if (fs::exists(timing)) {
    const json tj = read_json(timing);
    if (tj.contains("epoch_wall_seconds") && tj.at("epoch_wall_seconds").size() == t.epochs.size())
      for (std::size_t i = 0; i < t.epochs.size(); ++i) t.epochs[i].wall_seconds = tj.at("epoch_wall_seconds")[i].get<double>();
  }
  return t;
}

ojson cost_json(const RunCost& c) {
  ojson breakdown = ojson::array();
  for (const auto& s : c.breakdown) breakdown.push_back({{"stage", s.stage}, {"level", s.level}, {"macs", s.macs}});
  return ojson{{"crossed", c.crossed},       {"crossing_epoch", c.crossing_epoch}, {"macs", c.macs},
               {"best_loss", c.best_loss},   {"final_loss", c.final_loss},         {"total_macs", c.total_macs},
               {"breakdown", breakdown}};
}

int cmd_compare(const std::string& mrtl_path, const std::string& fixed_path, const CLI::Option* target_opt, double target,
                double margin, const std::string& out) {
  const json a = read_json(mrtl_path);
  const json b = read_json(fixed_path);
  const TrainingTrace ta = summary_trace(mrtl_path, a);
  const TrainingTrace tb = summary_trace(fixed_path, b);
  if (a.value("data_seed", json()) != b.value("data_seed", json()))
    throw SchemaError("summaries come from different data seeds (" + a.value("data_seed", json()).dump() + " vs " +
                      b.value("data_seed", json()).dump() + "); refusing to compare");
  if (a.value("task", "") != b.value("task", "")) throw SchemaError("summaries come from different tasks");
  if (tb.epochs.empty() || ta.epochs.empty()) throw SchemaError("empty trace in summary");
  const double tgt = target_opt->count() ? target : tb.final_val_loss() * (1.0 + margin);
  const SpeedupReport r = speedup_report(ta, tb, tgt);

  ojson j;
  j["target_loss"] = r.target_loss;
  j["mrtl"] = cost_json(r.mrtl);
  j["fixed"] = cost_json(r.fixed);
  j["mac_ratio"] = r.mac_ratio ? ojson(*r.mac_ratio) : ojson();
  j["wall_ratio"] = r.wall_ratio ? ojson(*r.wall_ratio) : ojson();
  const std::string text = r.text();
  if (!out.empty()) {
    ensure_dir(out);
    write_text(fs::path(out) / "compare.json", j.dump(2) + "\n");
    write_text(fs::path(out) / "compare.txt", text);
  }
  std::cout << text;
  return kExitOk;
}

// ---- decompose ----

int cmd_decompose(const Common& opt, const std::string& input, const std::string& checkpoint, std::size_t rank,
                  std::size_t max_iters, double tol) {
  if (input.empty() == checkpoint.empty()) throw SchemaError("decompose needs exactly one of --input or --checkpoint");
  RunConfig c = opt.load();
  const fs::path out = c.output_dir;
  ensure_dir(out);

  RunState st;
  DenseTensor w;
  if (!input.empty()) {
    w = read_tensor(input);
  } else {
    st = read_checkpoint(checkpoint);
    w = st.stage == Stage::full ? st.full.w : to_full_rank(st.low).w;
  }
  const AlsConfig als{rank, max_iters, tol, c.seed};
  const AlsResult res = cp_als(w, als);

  std::vector<std::string> files;
  for (std::size_t m = 0; m < res.factors.factors.size(); ++m) {
    const std::string name = "factor_" + std::to_string(m) + ".csv";
    write_csv_matrix(out / name, res.factors.factors[m]);
    files.push_back(name);
  }
  write_csv_matrix(out / "lambdas.csv", Matrix(1, res.factors.lambdas.size(), res.factors.lambdas));
  files.push_back("lambdas.csv");

  if (!checkpoint.empty()) {
    RunState low;
    low.stage = Stage::low;
    low.level = st.level;
    low.grids = st.grids;
    low.macs = st.macs;
    low.trace = st.trace;
    const Activation act = st.stage == Stage::full ? st.full.activation : st.low.activation;
    std::vector<double> bias = st.stage == Stage::full ? st.full.bias : st.low.bias;
    low.low = low_rank_from_cp(res.factors, std::move(bias), act);
    write_checkpoint(out / "checkpoint", low);
    files.push_back("checkpoint");
  }

  ojson info{{"rank", rank},       {"fit", res.fit},           {"iterations", res.iterations},
             {"seed", c.seed},     {"shape", w.shape()},       {"fit_history", res.fit_history}};
  write_text(out / "decompose.json", info.dump(2) + "\n");
  files.push_back("decompose.json");
  write_text(out / "manifest.json", manifest("decompose", c, files).dump(2) + "\n");
  std::cout << "rank " << rank << " fit " << format_double(res.fit) << " after " << res.iterations << " sweeps\n";
  return kExitOk;
}

// ---- export-factors / diagnose ----

GridSpec grid_for(const RunState& st, std::size_t mode, std::size_t rows, const RunConfig* cfg) {
  if (mode < st.grids.size() && st.grids[mode].cells() == rows) return st.grids[mode];
  if (cfg && st.level < cfg->ladder.size() && mode < cfg->ladder.spatial_modes() &&
      cfg->ladder.levels[st.level][mode].cells() == rows)
    return cfg->ladder.levels[st.level][mode];
  return make_grid({rows});
}

std::vector<double> column(const Matrix& m, std::size_t k) {
  std::vector<double> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, k);
  return v;
}

ojson moran_entries(const RunState& st, const RunConfig* cfg, double* mean) {
  ojson cols = ojson::array();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < st.low.c.size(); ++s) {
    const GridSpec g = grid_for(st, s, st.low.c[s].rows(), cfg);
    for (std::size_t k = 0; k < st.low.c[s].cols(); ++k) {
      ojson e{{"mode", s}, {"column", k}};
      try {
        const double i = morans_i(column(st.low.c[s], k), g);
        e["morans_i"] = i;
        sum += i;
        ++count;
      } catch (const NumericError& err) {
        e["morans_i"] = nullptr;
        e["error"] = err.what();
      }
      cols.push_back(e);
    }
  }
  if (mean) *mean = count ? sum / static_cast<double>(count) : std::nan("");
  return cols;
}

RunState read_low_rank(const std::string& checkpoint, const char* command) {
  RunState st = read_checkpoint(checkpoint);
  if (st.stage == Stage::full)
    throw SchemaError(std::string(command) + ": " + checkpoint +
                      " holds a full-rank model with no spatial factors; run `mrtl decompose --checkpoint " +
                      checkpoint + " --rank K --out DIR` first and use DIR/checkpoint");
  return st;
}

int cmd_export(const std::string& checkpoint, const std::string& out, const std::string& config) {
  if (checkpoint.empty()) throw SchemaError("export-factors needs --checkpoint");
  std::optional<RunConfig> cfg;
  if (!config.empty()) cfg = load_run_config(config);
  const RunState st = read_low_rank(checkpoint, "export-factors");
  const fs::path dir = out.empty() ? fs::path("factors") : fs::path(out);
  ensure_dir(dir);

  write_csv_matrix(dir / "a.csv", st.low.a);
  write_csv_matrix(dir / "b.csv", st.low.b);
  write_csv_matrix(dir / "bias.csv", Matrix(1, st.low.bias.size(), st.low.bias));
  for (std::size_t s = 0; s < st.low.c.size(); ++s) {
    write_csv_matrix(dir / ("c" + std::to_string(s) + ".csv"), st.low.c[s]);
    const GridSpec g = grid_for(st, s, st.low.c[s].rows(), cfg ? &*cfg : nullptr);
    const Matrix signed_c = sign_normalize_columns(st.low.c[s]);
    for (std::size_t k = 0; k < signed_c.cols(); ++k)
      write_text(dir / ("c" + std::to_string(s) + "_k" + std::to_string(k) + ".pgm"), heatmap_pgm(column(signed_c, k), g));
  }
  double mean = 0.0;
  ojson side{{"neighborhood", "rook"}, {"columns", moran_entries(st, cfg ? &*cfg : nullptr, &mean)}};
  side["mean_morans_i"] = std::isnan(mean) ? ojson() : ojson(mean);
  write_text(dir / "morans_i.json", side.dump(2) + "\n");
  std::cout << "exported " << st.low.c.size() << " spatial factor(s) of rank " << st.low.rank() << " to " << dir.string()
            << "\n";
  return kExitOk;
}

int cmd_diagnose(const Common& opt, const std::string& checkpoint, double eps) {
  const RunConfig c = opt.load();
  ojson rep;
  ojson norms = ojson::array();
  for (std::size_t r = 0; r + 1 < c.ladder.size(); ++r) {
    const auto ops = build_level_operators(c.train.scheme, c.ladder.levels[r], c.ladder.levels[r + 1]);
    for (std::size_t s = 0; s < ops.size(); ++s)
      norms.push_back({{"from_level", r},
                       {"to_level", r + 1},
                       {"mode", s},
                       {"scheme", to_string(c.train.scheme)},
                       {"norm", operator_norm(ops[s])},
                       {"scale_correction", ops[s].scale_correction}});
  }
  rep["operator_norms"] = norms;
  rep["eps"] = eps;

  if (!checkpoint.empty()) {
    const RunState st = read_checkpoint(checkpoint);
    if (st.stage == Stage::low) {
      double mean = 0.0;
      rep["morans_i"] = moran_entries(st, &c, &mean);
      rep["mean_morans_i"] = std::isnan(mean) ? ojson() : ojson(mean);
    }
    ojson rates = ojson::array();
    for (Stage stage : {Stage::full, Stage::low})
      for (std::size_t l = 0; l < c.ladder.size(); ++l) {
        const auto recs = st.trace.level_records(stage, l);
        if (recs.empty()) continue;
        std::vector<double> deltas;
        for (const auto& e : recs) deltas.push_back(e.delta_norm);
        ojson e{{"stage", to_string(stage)}, {"level", l}, {"epochs", recs.size()}};
        if (deltas.size() >= 6) {
          const double g = contraction_estimate(deltas);
          e["gamma"] = g;
          e["speedup_factor"] = speedup_factor(g, eps);
        } else {
          e["gamma"] = nullptr;
          e["note"] = "fewer than 6 epochs";
        }
        rates.push_back(e);
      }
    rep["contraction"] = rates;
    rep["cp_fit"] = st.trace.cp_fit;
  }
  const fs::path out = c.output_dir;
  ensure_dir(out);
  write_text(out / "diagnose.json", rep.dump(2) + "\n");
  std::cout << rep.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

std::string heatmap_pgm(std::span<const double> col, const GridSpec& g) {
  if (col.size() != g.cells())
    throw ShapeError("heatmap: column has " + std::to_string(col.size()) + " values, grid has " +
                     std::to_string(g.cells()) + " cells");
  const std::size_t rows = g.axes() <= 1 ? 1 : g.dims[0];
  const std::size_t width = col.size() / rows;
  double m = 0.0;
  for (double v : col) m = std::max(m, std::abs(v));
  std::ostringstream os;
  os << "P2\n" << width << ' ' << rows << "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double v = col[r * width + c];
      const long level = m > 0 ? std::lround(255.0 * (v + m) / (2.0 * m)) : 128;
      os << (c ? " " : "") << std::clamp(level, 0L, 255L);
    }
    os << '\n';
  }
  return os.str();
}

double f1_score(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size()) throw ShapeError("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= 0.5, t = y[i] >= 0.5;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Multiresolution tensor learning"};
  app.require_subcommand(1);

  Common gen_opt, train_opt, dec_opt, diag_opt;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset and its planted factors");
  gen_opt.attach(gen);

  auto* train = app.add_subcommand("train", "Train coarse-to-fine (or at the final resolution with --fixed)");
  train_opt.attach(train);
  bool fixed = false;
  std::string resume;
  train->add_flag("--fixed", fixed, "Train only at the final resolution");
  train->add_option("--resume", resume, "Continue from a checkpoint directory");

  auto* cmp = app.add_subcommand("compare", "Speedup report from an MRTL summary and a fixed-resolution summary");
  std::string cmp_a, cmp_b, cmp_out;
  double target = 0.0, margin = 0.02;
  cmp->add_option("mrtl", cmp_a, "summary.json of the multiresolution run")->required();
  cmp->add_option("fixed", cmp_b, "summary.json of the fixed-resolution run")->required();
  auto* target_opt = cmp->add_option("--target", target, "Target validation loss");
  cmp->add_option("--margin", margin, "Default target is the fixed final loss times (1 + margin)");
  cmp->add_option("--out", cmp_out, "Directory for compare.json and compare.txt");

  auto* dec = app.add_subcommand("decompose", "CP-ALS of a tensor file or checkpoint");
  dec_opt.attach(dec);
  std::string dec_input, dec_ckpt;
  std::size_t rank = 5, iters = 500;
  double tol = 1e-10;
  dec->add_option("--input", dec_input, "MRTN tensor file");
  dec->add_option("--checkpoint", dec_ckpt, "Checkpoint directory");
  dec->add_option("--rank", rank, "CP rank")->check(CLI::PositiveNumber);
  dec->add_option("--max-iters", iters, "ALS sweep limit");
  dec->add_option("--tol", tol, "Stop when the fit changes less than this");

  auto* exp = app.add_subcommand("export-factors", "Factor CSVs, PGM heatmaps and Moran's I of a low-rank checkpoint");
  std::string exp_ckpt, exp_out, exp_cfg;
  exp->add_option("--checkpoint", exp_ckpt, "Checkpoint directory")->required();
  exp->add_option("--out", exp_out, "Output directory");
  exp->add_option("--config", exp_cfg, "Config supplying grids for old checkpoints");

  auto* diag = app.add_subcommand("diagnose", "Operator norms, Moran's I and contraction estimates");
  diag_opt.attach(diag);
  std::string diag_ckpt;
  double eps = 1e-3;
  diag->add_option("--checkpoint", diag_ckpt, "Checkpoint directory");
  diag->add_option("--eps", eps, "Target accuracy for the speedup factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSchema;
  }

  try {
    if (*gen) return cmd_generate(gen_opt);
    if (*train) return cmd_train(train_opt, fixed, resume);
    if (*cmp) return cmd_compare(cmp_a, cmp_b, target_opt, target, margin, cmp_out);
    if (*dec) return cmd_decompose(dec_opt, dec_input, dec_ckpt, rank, iters, tol);
    if (*exp) return cmd_export(exp_ckpt, exp_out, exp_cfg);
    if (*diag) return cmd_diagnose(diag_opt, diag_ckpt, eps);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSchema;
  }
  return kExitSchema;
}

}  // namespace mrtl
