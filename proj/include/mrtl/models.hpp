#pragma once

// Tensor regression/classification models.
//
// Inputs carry a leading sample mode: x has shape (N, F, D1, ..., DS). Each
// sample is attached to one output i (e.g. the ball handler it describes), so
//
//   full rank:  yhat_n = a( sum_{f,d} W[i_n, f, d] x[n, f, d] + b[i_n] )
//   low rank:   yhat_n = a( sum_{f,d,k} A[i_n,k] B[f,k] C1[d1,k] ... CS[dS,k] x[n, f, d] + b[i_n] )
//
// which is the per-output model with x[i, :, :] = 0 for outputs other than
// i_n. With a single output every sample belongs to output 0.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mrtl/tensor.hpp"

namespace mrtl {

enum class Activation { sigmoid, identity };
enum class LossKind { weighted_ce, mse };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);
LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

// Inputs are shared, not copied: datasets at fine resolutions are large.
struct Batch {
  std::shared_ptr<const DenseTensor> input;  // (N, F, D1, ..., DS)
  std::vector<double> y;                     // one label per sample
  std::vector<std::uint32_t> output;         // output index per sample; empty means all 0
  std::vector<double> weight;                // optional per-sample loss weights

  const DenseTensor& x() const { return *input; }
  std::size_t samples() const { return !input || x().order() == 0 ? 0 : x().dim(0); }
  std::size_t features() const { return x().dim(1); }
  std::size_t sample_size() const { return samples() == 0 ? 0 : x().size() / samples(); }
  std::uint32_t output_of(std::size_t n) const { return output.empty() ? 0u : output[n]; }
  void validate(bool classification) const;
};

Batch make_batch(DenseTensor x, std::vector<double> y, std::vector<std::uint32_t> output = {},
                 std::vector<double> weight = {});

struct FullRankModel {
  DenseTensor w;  // (I, F, D1, ..., DS)
  std::vector<double> bias;
  Activation activation = Activation::sigmoid;

  std::size_t outputs() const { return w.dim(0); }
  std::size_t features() const { return w.dim(1); }
  std::size_t spatial_modes() const { return w.order() - 2; }
};

struct LowRankModel {
  Matrix a;               // I x K
  Matrix b;               // F x K
  std::vector<Matrix> c;  // per spatial mode, D_s x K
  std::vector<double> bias;
  Activation activation = Activation::sigmoid;

  std::size_t rank() const { return a.cols(); }
  std::size_t outputs() const { return a.rows(); }
  Shape weight_shape() const;
  CPFactors factors() const;
  void validate() const;
};

FullRankModel make_full_rank(std::size_t outputs, std::size_t features, const std::vector<std::size_t>& spatial,
                             Activation act);
LowRankModel low_rank_from_cp(const CPFactors& f, std::vector<double> bias, Activation act);
FullRankModel to_full_rank(const LowRankModel& m);

double sigmoid(double z);

// Rows to evaluate; empty means every sample.
using Rows = std::span<const std::size_t>;

std::vector<double> forward_full(const FullRankModel& m, const Batch& b, Rows rows = {}, std::uint64_t* macs = nullptr);
std::vector<double> forward_low(const LowRankModel& m, const Batch& b, Rows rows = {}, std::uint64_t* macs = nullptr);

struct LossResult {
  double value = 0.0;
  std::vector<double> dpred;  // dL/dpred, already divided by the batch size
};

constexpr double kPredClamp = 1e-12;

// Positive-class weighting: L_n = -beta y log p - (1-y) log(1-p). With
// `literal_beta` both terms are scaled by beta.
LossResult loss_weighted_ce(std::span<const double> pred, std::span<const double> y, double beta,
                            bool literal_beta = false, std::span<const double> weight = {});
LossResult loss_mse(std::span<const double> pred, std::span<const double> y, std::span<const double> weight = {});

// (#negatives) / (#positives); 1 when either class is absent.
double class_ratio_beta(std::span<const double> labels);

struct LossSpec {
  LossKind kind = LossKind::weighted_ce;
  double beta = 1.0;
  bool literal_beta = false;
};

LossResult evaluate_loss(const LossSpec& spec, std::span<const double> pred, std::span<const double> y,
                         std::span<const double> weight = {});

struct FullRankGrad {
  DenseTensor w;
  std::vector<double> bias;
};

struct LowRankGrad {
  Matrix a;
  Matrix b;
  std::vector<Matrix> c;
  std::vector<double> bias;
};

// Forward, loss and chain rule in one pass over `rows`.
struct FullRankPass {
  double loss = 0.0;
  FullRankGrad grad;
};
struct LowRankPass {
  double loss = 0.0;
  LowRankGrad grad;
};

FullRankPass backward_full(const FullRankModel& m, const Batch& b, const LossSpec& loss, Rows rows = {},
                           std::uint64_t* macs = nullptr);
LowRankPass backward_low(const LowRankModel& m, const Batch& b, const LossSpec& loss, Rows rows = {},
                         std::uint64_t* macs = nullptr);

}  // namespace mrtl
