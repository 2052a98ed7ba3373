#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffnaps/common.hpp"
#include "diffnaps/dataset.hpp"
#include "diffnaps/model.hpp"

namespace diffnaps {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t hidden = 100;
  double lambda_c = 1.0;        // weight of the classification loss
  double kappa0 = 1e-4;         // initial lasso coefficient of the W-shaped regularizer
  double lambda0 = 1e-4;        // initial ridge coefficient
  double sched_gamma = 1.05;    // kappa, lambda *= sched_gamma after every epoch
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double init_lo = kDefaultInitLo;
  double init_hi = kDefaultInitHi;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  unsigned threads = 1;

  /// Throws ContractViolation naming the first out-of-range field.
  void validate() const;
};

struct Gradients {
  Matrix encoder;
  std::vector<double> bias;
  Matrix classifier;

  static Gradients zeros_like(const ModelParams& params);
  bool all_finite() const noexcept;
};

struct EpochStats {
  std::size_t epoch = 0;         // 1-based
  double recon_loss = 0.0;       // mean per row
  double class_loss = 0.0;       // mean per row, unweighted by lambda_c
  double pattern_length = 0.0;   // r_s(offset(W_E)) at epoch end
  double w_shape = 0.0;          // r_b(offset(W_E)) + r_b(W_C) at epoch end
  double kappa = 0.0;            // coefficients in force during the epoch
  double lambda = 0.0;
  double seconds = 0.0;          // wall time; excluded from equality
  std::size_t clamped_logs = 0;  // predictions whose true-class probability hit the log floor

  bool same_values(const EpochStats& other) const noexcept;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// Sparsity-weighted Hamming loss: missing 1s cost (1 - alpha), spurious 1s cost alpha.
double recon_loss(std::span<const std::uint8_t> x, std::span<const std::uint8_t> x_hat,
                  double alpha);
/// Same on sorted sparse index sets.
double recon_loss(std::span<const FeatureIndex> x, std::span<const FeatureIndex> x_hat,
                  double alpha);

inline constexpr double kLogFloor = 1e-12;

struct ClassLoss {
  double value = 0.0;
  bool clamped = false;
};

/// -log(max(y_hat[y], 1e-12)).
ClassLoss class_loss(ClassId y, std::span<const double> y_hat);

struct RegTerm {
  double value = 0.0;
  Matrix gradient;
};

/// Sum over neurons of the squared row sum. With `gate`, rows whose sum is
/// below 1 receive zero gradient.
RegTerm reg_pattern_length(const Matrix& weights, bool gate = true);

/// Elementwise min{r(w), r(w-1)} with r(w) = kappa|w| + lambda w^2. At w = 0.5
/// the gradient follows the branch toward 0.
RegTerm reg_w_shape(const Matrix& weights, double kappa, double lambda);

/// max(W - 1/m, 0) elementwise, where m is the column count.
Matrix offset_encoder(const Matrix& encoder);

struct LossWeights {
  double lambda_c = 1.0;
  double kappa = 0.0;
  double lambda = 0.0;
  /// Multiplier on the regularizers. Mini-batch training uses |batch| / n so an
  /// epoch of steps sums to the full-data objective.
  double reg_scale = 1.0;
};

struct LossBreakdown {
  double recon = 0.0;            // summed over the batch
  double classification = 0.0;   // summed over the batch, before lambda_c
  double pattern_length = 0.0;
  double w_shape_encoder = 0.0;
  double w_shape_classifier = 0.0;
  double total = 0.0;
  std::size_t clamped_logs = 0;
};

/// sum_i [l_e(x_i, x_hat_i) + lambda_c l_c(y_i, y_hat_i)]
///   + reg_scale * (r_s(offset(W_E)) + r_b(offset(W_E)) + r_b(W_C)).
LossBreakdown total_loss(const ForwardTrace& trace, std::span<const ClassId> labels,
                         const ModelParams& params, const LossWeights& weights, double alpha);

/// Straight-through gradients of total_loss for the encoder sample in `trace`.
/// Accumulation order is fixed per neuron, so the result is identical for any
/// thread count.
Gradients backward(const ForwardTrace& trace, std::span<const ClassId> labels,
                   const ModelParams& params, const LossWeights& weights, double alpha,
                   unsigned threads = 1);

/// Gradient-descent step followed by projection onto the parameter box.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const ModelParams& shape);

  /// Throws NumericalError (tagged with `epoch`) on non-finite gradients.
  void apply_step(ModelParams& params, const Gradients& grads, std::size_t epoch = 0);

 private:
  void update(std::span<double> values, std::span<const double> grads, std::span<double> m1,
              std::span<double> m2) const;

  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  double bias_correction1_ = 1.0, bias_correction2_ = 1.0;
  Gradients first_, second_;
};

/// Clip W_E, W_C to [0,1] and bias to <= -1.
void project_params(ModelParams& params);

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Shuffled mini-batch training; one encoder sample per batch; kappa and lambda
/// grow by sched_gamma after every epoch. `initial` resumes from given parameters.
TrainResult train(const LabeledDataset& data, const TrainConfig& config,
                  std::optional<ModelParams> initial = std::nullopt,
                  const EpochCallback& on_epoch = {});

}  // namespace diffnaps
