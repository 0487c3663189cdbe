#include "mrtl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mrtl/error.hpp"
#include "mrtl/interp.hpp"

namespace mrtl {
namespace {

Matrix unit_gaussian_columns(std::size_t rows, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, k);
  for (double& v : m.data()) v = normal(rng);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += m(i, c) * m(i, c);
    s = std::sqrt(s);
    for (std::size_t i = 0; i < rows; ++i) m(i, c) /= s;
  }
  return m;
}

std::vector<double> random_point(const GridSpec& g, std::mt19937_64& rng) {
  std::vector<double> p(g.axes());
  for (std::size_t a = 0; a < g.axes(); ++a) {
    std::uniform_real_distribution<double> u(g.extent[a].first, g.extent[a].second);
    p[a] = u(rng);
  }
  return p;
}

// Cell index of fine cell -> containing coarse cell.
std::vector<std::size_t> containment(const GridSpec& coarse, const GridSpec& fine) {
  const InterpOperator op = build_nearest(coarse, fine);
  std::vector<std::size_t> map(fine.cells());
  for (const auto& e : op.entries) map[e.row] = e.col;
  return map;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("CSV line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
}

}  // namespace

TaskKind parse_task(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw SchemaError("unknown task '" + s + "'");
}

std::string to_string(TaskKind t) { return t == TaskKind::classification ? "classification" : "regression"; }

void SyntheticSpec::validate() const {
  if (outputs < 1 || features < 1) throw SchemaError("SyntheticSpec: outputs and features must be at least 1");
  if (true_rank < 1) throw SchemaError("SyntheticSpec: true_rank must be at least 1");
  if (samples < 1) throw SchemaError("SyntheticSpec: samples must be at least 1");
  if (noise_sigma < 0) throw SchemaError("SyntheticSpec: noise_sigma must be nonnegative");
  if (!(smoothness > 0)) throw SchemaError("SyntheticSpec: smoothness must be positive");
  if (bumps < 1) throw SchemaError("SyntheticSpec: bumps must be at least 1");
  ladder.validate();
}

Batch Dataset::batch(std::size_t level) const { return Batch{x.at(level), y, output, {}}; }

CPFactors GroundTruth::factors(std::size_t level) const {
  CPFactors f;
  f.factors.push_back(a);
  f.factors.push_back(b);
  for (const auto& m : c.at(level)) f.factors.push_back(m);
  f.lambdas.assign(a.cols(), signal_scale);
  return f;
}

LowRankModel GroundTruth::model(std::size_t level, Activation act) const {
  return low_rank_from_cp(factors(level), bias, act);
}

std::vector<double> bump_field(const GridSpec& g, const std::vector<std::vector<double>>& centers,
                               const std::vector<double>& amplitudes, double width) {
  if (centers.size() != amplitudes.size()) throw ShapeError("bump_field: one amplitude per center required");
  const auto cells = cell_centers(g);
  const double w = width * g.diameter();
  std::vector<double> out(cells.size(), 0.0);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t b = 0; b < centers.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < g.axes(); ++a) d2 += (cells[c][a] - centers[b][a]) * (cells[c][a] - centers[b][a]);
      out[c] += amplitudes[b] * std::exp(-d2 / (2.0 * w * w));
    }
  return out;
}

Synthetic generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto& ladder = spec.ladder;
  const std::size_t levels = ladder.size();
  const std::size_t modes = ladder.spatial_modes();
  const std::size_t k = spec.true_rank;
  const std::size_t n = spec.samples;
  const std::size_t f = spec.features;
  const Level& finest = ladder.levels.back();

  std::mt19937_64 rng(spec.seed);
  Synthetic out;
  GroundTruth& truth = out.truth;
  truth.a = unit_gaussian_columns(spec.outputs, k, rng);
  truth.b = unit_gaussian_columns(f, k, rng);
  truth.signal_scale = spec.signal_scale;
  truth.bias.assign(spec.outputs, spec.bias);

  // Bump layout per (mode, component), evaluated at every level.
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  std::bernoulli_distribution flip(0.3);
  std::vector<std::vector<std::vector<std::vector<double>>>> centers(modes, std::vector<std::vector<std::vector<double>>>(k));
  std::vector<std::vector<std::vector<double>>> amps(modes, std::vector<std::vector<double>>(k));
  for (std::size_t s = 0; s < modes; ++s)
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t b = 0; b < spec.bumps; ++b) {
        centers[s][c].push_back(random_point(finest[s], rng));
        const double a = amp(rng);
        amps[s][c].push_back(b > 0 && flip(rng) ? -a : a);
      }
  truth.c.assign(levels, {});
  for (std::size_t r = 0; r < levels; ++r)
    for (std::size_t s = 0; s < modes; ++s) {
      const GridSpec& g = ladder.levels[r][s];
      Matrix m(g.cells(), k);
      for (std::size_t c = 0; c < k; ++c) {
        const auto field = bump_field(g, centers[s][c], amps[s][c], spec.smoothness);
        for (std::size_t d = 0; d < field.size(); ++d) m(d, c) = field[d];
      }
      truth.c[r].push_back(std::move(m));
    }

  Dataset& data = out.data;
  data.task = spec.task;
  data.y.assign(n, 0.0);
  data.output.assign(n, 0);
  std::uniform_int_distribution<std::uint32_t> pick_output(0, static_cast<std::uint32_t>(spec.outputs - 1));
  for (auto& o : data.output) o = pick_output(rng);

  Shape shape{n, f};
  for (const auto& g : finest) shape.push_back(g.cells());
  auto xp = std::make_shared<DenseTensor>(shape);
  DenseTensor& x = *xp;
  const std::size_t p = x.size() / n;
  std::normal_distribution<double> normal(0.0, 1.0);

  if (spec.task == TaskKind::classification) {
    // One location per spatial mode, Gaussian feature values at it.
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t flat = 0;
      for (const auto& g : finest) {
        std::uniform_int_distribution<std::size_t> cell(0, g.cells() - 1);
        flat = flat * g.cells() + cell(rng);
      }
      const std::size_t spatial = p / f;
      for (std::size_t j = 0; j < f; ++j) x[i * p + j * spatial + flat] = normal(rng);
    }
  } else {
    // Smooth random fields: one bump per (sample, feature, mode).
    std::vector<double> field;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        field.assign(1, normal(rng));
        for (const auto& g : finest) {
          const auto part = bump_field(g, {random_point(g, rng)}, {1.0}, spec.smoothness);
          std::vector<double> next;
          next.reserve(field.size() * part.size());
          for (double u : field)
            for (double v : part) next.push_back(u * v);
          field = std::move(next);
        }
        std::copy(field.begin(), field.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * p + j * field.size()));
      }
  }

  // Labels from the finest resolution.
  {
    Batch b{xp, std::vector<double>(n, 0.0), data.output, {}};
    const auto act = spec.task == TaskKind::classification ? Activation::sigmoid : Activation::identity;
    const auto pred = forward_low(truth.model(levels - 1, act), b);
    for (std::size_t i = 0; i < n; ++i) {
      if (spec.task == TaskKind::classification) {
        std::bernoulli_distribution label(pred[i]);
        data.y[i] = label(rng) ? 1.0 : 0.0;
      } else {
        data.y[i] = pred[i] + spec.noise_sigma * normal(rng);
      }
    }
  }

  const auto kind = spec.task == TaskKind::classification ? DownsampleKind::categorical : DownsampleKind::continuous;
  data.x.resize(levels);
  for (std::size_t r = 0; r + 1 < levels; ++r) {
    DenseTensor cur = downsample(x, 2, finest[0], ladder.levels[r][0], kind);
    for (std::size_t s = 1; s < modes; ++s) cur = downsample(cur, 2 + s, finest[s], ladder.levels[r][s], kind);
    data.x[r] = std::make_shared<const DenseTensor>(std::move(cur));
  }
  data.x[levels - 1] = std::move(xp);
  data.split = split(n, spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return out;
}

DenseTensor downsample(const DenseTensor& x_fine, std::size_t mode, const GridSpec& fine, const GridSpec& coarse,
                       DownsampleKind kind) {
  if (mode >= x_fine.order()) throw ShapeError("downsample: mode out of range");
  if (x_fine.dim(mode) != fine.cells()) throw ShapeError("downsample: mode size differs from the fine grid");
  const auto map = containment(coarse, fine);
  Shape out_shape = x_fine.shape();
  out_shape[mode] = coarse.cells();
  DenseTensor out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t j = 0; j < mode; ++j) outer *= x_fine.dim(j);
  for (std::size_t j = mode + 1; j < x_fine.order(); ++j) inner *= x_fine.dim(j);
  const std::size_t df = fine.cells(), dc = coarse.cells();
  const double scale = kind == DownsampleKind::continuous ? static_cast<double>(dc) / static_cast<double>(df) : 1.0;
  const auto src = x_fine.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t d = 0; d < df; ++d) {
      const double* s = src.data() + (o * df + d) * inner;
      double* t = dst.data() + (o * dc + map[d]) * inner;
      for (std::size_t i = 0; i < inner; ++i) t[i] += s[i];
    }
  if (scale != 1.0)
    for (double& v : dst) v *= scale;
  return out;
}

DenseTensor upsample_replicate(const DenseTensor& x_coarse, std::size_t mode, const GridSpec& coarse,
                               const GridSpec& fine) {
  InterpOperator op = build_nearest(coarse, fine);
  return apply_along_mode(x_coarse, mode, op);
}

Split split(std::size_t n, std::uint64_t seed) {
  if (n < 5) throw ShapeError("split: need at least 5 samples, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t ntr = n * 6 / 10;
  const std::size_t nva = n * 2 / 10;
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntr));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(ntr), idx.begin() + static_cast<std::ptrdiff_t>(ntr + nva));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(ntr + nva), idx.end());
  return s;
}

CsvData load_csv_dataset(const std::filesystem::path& path, TaskKind task, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::size_t> dims;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("dims=");
      if (pos != std::string::npos) {
        std::stringstream ss(line.substr(pos + 5));
        std::string part;
        while (std::getline(ss, part, 'x')) dims.push_back(static_cast<std::size_t>(parse_number(part, lineno)));
      }
      continue;
    }
    header = split_csv_line(line);
    break;
  }
  if (dims.empty()) throw IoError(path.string() + ": missing '# dims=...' line");
  if (header.empty() || header.front() != "id" || header.back() != "label")
    throw IoError(path.string() + ": header must start with 'id' and end with 'label'");
  const GridSpec grid = make_grid(dims);
  const bool has_output = header.size() > 1 && header[1] == "output";
  std::size_t cells = 0, feats = 0;
  for (const auto& h : header) {
    if (h.rfind("cell_", 0) == 0) ++cells;
    if (h.rfind("feat_", 0) == 0) ++feats;
  }
  if (cells != grid.cells())
    throw IoError(path.string() + ": " + std::to_string(cells) + " cell columns, grid has " + std::to_string(grid.cells()));
  if (header.size() != 2 + (has_output ? 1 : 0) + cells + feats) throw IoError(path.string() + ": unrecognized columns");
  const std::size_t first_cell = has_output ? 2 : 1;

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != header.size())
      throw IoError(path.string() + ": line " + std::to_string(lineno) + " has " + std::to_string(cols.size()) +
                    " fields, expected " + std::to_string(header.size()));
    std::vector<double> v;
    for (const auto& c : cols) v.push_back(parse_number(c, lineno));
    rows.push_back(std::move(v));
  }
  const std::size_t n = rows.size();
  const std::size_t f = feats == 0 ? 1 : feats;
  CsvData out{grid, {}};
  out.data.task = task;
  DenseTensor x(Shape{n, f, cells});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    if (has_output) {
      if (r[1] < 0 || r[1] != std::floor(r[1])) throw IoError(path.string() + ": output index must be a nonnegative integer");
      out.data.output.push_back(static_cast<std::uint32_t>(r[1]));
    }
    for (std::size_t j = 0; j < f; ++j) {
      const double fv = feats == 0 ? 1.0 : r[first_cell + cells + j];
      for (std::size_t d = 0; d < cells; ++d) x[(i * f + j) * cells + d] = fv * r[first_cell + d];
    }
    out.data.y.push_back(r.back());
  }
  if (task == TaskKind::classification)
    for (double v : out.data.y)
      if (v != 0.0 && v != 1.0) throw SchemaError(path.string() + ": classification labels must be 0 or 1");
  out.data.x.push_back(std::make_shared<const DenseTensor>(std::move(x)));
  out.data.split = split(n, seed);
  return out;
}

}  // namespace mrtl
