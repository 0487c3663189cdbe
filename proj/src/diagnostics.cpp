#include "mrtl/diagnostics.hpp"

#include <cmath>
#include <sstream>

#include "mrtl/error.hpp"
#include "mrtl/tensor_io.hpp"

namespace mrtl {

double morans_i(std::span<const double> field, const GridSpec& g, Neighborhood nb) {
  g.validate();
  const std::size_t n = g.cells();
  if (field.size() != n) throw ShapeError("morans_i: field has " + std::to_string(field.size()) + " values, grid has " +
                                          std::to_string(n) + " cells");
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> z(n);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = field[i] - mean;
    denom += z[i] * z[i];
  }
  double scale = 0.0;
  for (double v : field) scale = std::max(scale, std::abs(v));
  if (denom <= 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(n)) throw NumericError("zero variance");

  double num = 0.0, s0 = 0.0;
  if (nb.kind == Neighborhood::Kind::rook) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto ci = cell_coords(g, i);
      std::size_t stride = 1;
      for (std::size_t a = g.axes(); a-- > 0;) {
        // Neighbor one step up along axis a (each pair counted in both directions).
        if (ci[a] + 1 < g.dims[a]) {
          const std::size_t j = i + stride;
          num += 2.0 * z[i] * z[j];
          s0 += 2.0;
        }
        stride *= g.dims[a];
      }
    }
  } else {
    const Matrix d = normalized_distances(g);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = std::exp(-d(i, j) * d(i, j) / nb.sigma);
        num += w * z[i] * z[j];
        s0 += w;
      }
  }
  if (s0 == 0.0) throw NumericError("morans_i: neighborhood has no edges");
  return static_cast<double>(n) / s0 * num / denom;
}

Matrix sign_normalize_columns(const Matrix& m) {
  Matrix out = m;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double best = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r)
      if (std::abs(m(r, c)) > std::abs(best)) best = m(r, c);
    if (best < 0)
      for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = -m(r, c);
  }
  return out;
}

RunCost run_cost(const TrainingTrace& t, double target_loss) {
  RunCost c;
  if (t.epochs.empty()) throw ShapeError("speedup_report: empty trace");
  c.best_loss = t.epochs.front().val_loss;
  std::uint64_t prev = 0;
  for (const auto& e : t.epochs) {
    c.best_loss = std::min(c.best_loss, e.val_loss);
    if (!c.crossed && e.val_loss <= target_loss) {
      c.crossed = true;
      c.crossing_epoch = e.global_epoch;
      c.macs = e.macs;
      c.wall_seconds = e.wall_seconds;
    }
    const std::string stage = to_string(e.stage);
    if (c.breakdown.empty() || c.breakdown.back().stage != stage || c.breakdown.back().level != e.level)
      c.breakdown.push_back({stage, e.level, 0});
    c.breakdown.back().macs += e.macs - prev;
    prev = e.macs;
  }
  c.final_loss = t.epochs.back().val_loss;
  c.total_macs = t.epochs.back().macs;
  if (!c.crossed) {
    c.macs = c.total_macs;
    c.wall_seconds = t.epochs.back().wall_seconds;
  }
  return c;
}

SpeedupReport speedup_report(const TrainingTrace& mrtl, const TrainingTrace& fixed, double target_loss) {
  SpeedupReport r;
  r.target_loss = target_loss;
  r.mrtl = run_cost(mrtl, target_loss);
  r.fixed = run_cost(fixed, target_loss);
  if (r.mrtl.crossed && r.fixed.crossed) {
    if (r.mrtl.macs > 0) r.mac_ratio = static_cast<double>(r.fixed.macs) / static_cast<double>(r.mrtl.macs);
    if (r.mrtl.wall_seconds > 0 && r.fixed.wall_seconds > 0) r.wall_ratio = r.fixed.wall_seconds / r.mrtl.wall_seconds;
  }
  return r;
}

std::string SpeedupReport::text() const {
  std::ostringstream os;
  auto line = [&](const char* name, const RunCost& c) {
    os << name << ": ";
    if (c.crossed)
      os << "reached " << format_double(target_loss) << " at epoch " << c.crossing_epoch << " after " << c.macs
         << " MACs";
    else
      os << "did not reach " << format_double(target_loss) << "; best loss " << format_double(c.best_loss);
    os << " (total " << c.total_macs << " MACs, final loss " << format_double(c.final_loss) << ")\n";
    for (const auto& s : c.breakdown) os << "  " << s.stage << " r" << s.level + 1 << ": " << s.macs << " MACs\n";
  };
  line("mrtl", mrtl);
  line("fixed", fixed);
  if (mac_ratio)
    os << "MAC ratio fixed/mrtl: " << format_double(*mac_ratio) << "\n";
  else
    os << "MAC ratio: undefined (target not reached by both runs)\n";
  if (wall_ratio) os << "wall ratio fixed/mrtl: " << format_double(*wall_ratio) << "\n";
  return os.str();
}

double speedup_factor(double gamma, double eps) {
  if (!(gamma > 0 && gamma < 1) || !(eps > 0)) throw ShapeError("speedup_factor: need gamma in (0,1) and eps > 0");
  return std::log(1.0 / ((1.0 - gamma) * eps));
}

}  // namespace mrtl
