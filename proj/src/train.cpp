#include "diffnaps/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "diffnaps/parallel.hpp"

namespace diffnaps {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ContractViolation("unknown optimizer '" + std::string(name) + "' (expected sgd|adam)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractViolation("invalid config: " + what); };
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(lambda_c >= 0.0)) fail("lambda_c must be >= 0");
  if (!(kappa0 >= 0.0)) fail("kappa0 must be >= 0");
  if (!(lambda0 >= 0.0)) fail("lambda0 must be >= 0");
  if (!(sched_gamma > 1.0)) fail("sched_gamma must be > 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(0.0 <= init_lo && init_lo <= init_hi && init_hi <= 1.0)) {
    fail("init range must satisfy 0 <= init_lo <= init_hi <= 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas in [0,1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  return {Matrix(params.encoder.rows(), params.encoder.cols()),
          std::vector<double>(params.bias.size(), 0.0),
          Matrix(params.classifier.rows(), params.classifier.cols())};
}

bool Gradients::all_finite() const noexcept {
  auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(encoder.values()) && finite(bias) && finite(classifier.values());
}

bool EpochStats::same_values(const EpochStats& o) const noexcept {
  return epoch == o.epoch && recon_loss == o.recon_loss && class_loss == o.class_loss &&
         pattern_length == o.pattern_length && w_shape == o.w_shape && kappa == o.kappa &&
         lambda == o.lambda && clamped_logs == o.clamped_logs;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ContractViolation("density alpha must lie in (0,1); data is all-zero or all-one");
  }
}

// Walks two sorted index sets and reports every index in exactly one of them.
template <class OnMissing, class OnSpurious>
void for_each_mismatch(std::span<const FeatureIndex> x, std::span<const FeatureIndex> x_hat,
                       OnMissing&& missing, OnSpurious&& spurious) {
  std::size_t a = 0, b = 0;
  while (a < x.size() || b < x_hat.size()) {
    if (b == x_hat.size() || (a < x.size() && x[a] < x_hat[b])) {
      missing(x[a++]);
    } else if (a == x.size() || x_hat[b] < x[a]) {
      spurious(x_hat[b++]);
    } else {
      ++a;
      ++b;
    }
  }
}

double w_shape_value(double w, double kappa, double lambda) {
  const double toward0 = kappa * std::abs(w) + lambda * w * w;
  const double toward1 = kappa * std::abs(w - 1.0) + lambda * (w - 1.0) * (w - 1.0);
  return std::min(toward0, toward1);
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

double w_shape_grad(double w, double kappa, double lambda) {
  const double toward0 = kappa * std::abs(w) + lambda * w * w;
  const double toward1 = kappa * std::abs(w - 1.0) + lambda * (w - 1.0) * (w - 1.0);
  if (toward0 <= toward1) return kappa * sign(w) + 2.0 * lambda * w;
  return kappa * sign(w - 1.0) + 2.0 * lambda * (w - 1.0);
}

// Regularizer gradients accumulated straight into `grads` without temporaries;
// equals reg_scale * (mask * (r_s' + r_b') on offset(W_E), r_b' on W_C).
void add_regularizer_gradients(const ModelParams& params, const LossWeights& lw,
                               Gradients& grads) {
  const std::size_t m = params.features();
  const double shift = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < params.hidden(); ++i) {
    const auto w = params.encoder.row(i);
    auto g = grads.encoder.row(i);
    double row_sum = 0.0;
    for (double v : w) row_sum += std::max(v - shift, 0.0);
    const double length_grad = row_sum < 1.0 ? 0.0 : 2.0 * row_sum;
    for (std::size_t j = 0; j < m; ++j) {
      if (w[j] <= shift) continue;
      g[j] += lw.reg_scale * (length_grad + w_shape_grad(w[j] - shift, lw.kappa, lw.lambda));
    }
  }
  auto gc = grads.classifier.values();
  const auto wc = params.classifier.values();
  for (std::size_t t = 0; t < wc.size(); ++t) {
    gc[t] += lw.reg_scale * w_shape_grad(wc[t], lw.kappa, lw.lambda);
  }
}

}  // namespace

double recon_loss(std::span<const std::uint8_t> x, std::span<const std::uint8_t> x_hat,
                  double alpha) {
  check_alpha(alpha);
  if (x.size() != x_hat.size()) throw ContractViolation("recon_loss: length mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    const double weight = (1.0 - xj) * alpha + xj * (1.0 - alpha);
    total += weight * std::abs(xj - static_cast<double>(x_hat[j]));
  }
  return total;
}

double recon_loss(std::span<const FeatureIndex> x, std::span<const FeatureIndex> x_hat,
                  double alpha) {
  check_alpha(alpha);
  std::size_t missing = 0, spurious = 0;
  for_each_mismatch(x, x_hat, [&](FeatureIndex) { ++missing; }, [&](FeatureIndex) { ++spurious; });
  return static_cast<double>(missing) * (1.0 - alpha) + static_cast<double>(spurious) * alpha;
}

ClassLoss class_loss(ClassId y, std::span<const double> y_hat) {
  if (y >= y_hat.size()) throw ContractViolation("class_loss: label out of range");
  const double p = y_hat[y];
  if (p < kLogFloor) return {-std::log(kLogFloor), true};
  return {-std::log(p), false};
}

RegTerm reg_pattern_length(const Matrix& weights, bool gate) {
  RegTerm term{0.0, Matrix(weights.rows(), weights.cols())};
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto row = weights.row(i);
    const double row_sum = std::accumulate(row.begin(), row.end(), 0.0);
    term.value += row_sum * row_sum;
    if (gate && row_sum < 1.0) continue;
    for (double& g : term.gradient.row(i)) g = 2.0 * row_sum;
  }
  return term;
}

RegTerm reg_w_shape(const Matrix& weights, double kappa, double lambda) {
  RegTerm term{0.0, Matrix(weights.rows(), weights.cols())};
  const auto w = weights.values();
  auto g = term.gradient.values();
  for (std::size_t t = 0; t < w.size(); ++t) {
    term.value += w_shape_value(w[t], kappa, lambda);
    g[t] = w_shape_grad(w[t], kappa, lambda);
  }
  return term;
}

Matrix offset_encoder(const Matrix& encoder) {
  Matrix out(encoder.rows(), encoder.cols());
  const double shift = 1.0 / static_cast<double>(encoder.cols());
  const auto in = encoder.values();
  auto o = out.values();
  for (std::size_t t = 0; t < in.size(); ++t) o[t] = std::max(in[t] - shift, 0.0);
  return out;
}

LossBreakdown total_loss(const ForwardTrace& trace, std::span<const ClassId> labels,
                         const ModelParams& params, const LossWeights& lw, double alpha) {
  if (labels.size() != trace.rows.size()) {
    throw ContractViolation("total_loss: label count differs from batch size");
  }
  LossBreakdown out;
  for (std::size_t r = 0; r < trace.rows.size(); ++r) {
    const auto& row = trace.rows[r];
    out.recon += recon_loss(std::span<const FeatureIndex>(row.input),
                            std::span<const FeatureIndex>(row.reconstruction), alpha);
    const auto cl = class_loss(labels[r], row.class_probs);
    out.classification += cl.value;
    out.clamped_logs += cl.clamped;
  }
  const Matrix shifted = offset_encoder(params.encoder);
  out.pattern_length = reg_pattern_length(shifted).value;
  out.w_shape_encoder = reg_w_shape(shifted, lw.kappa, lw.lambda).value;
  out.w_shape_classifier = reg_w_shape(params.classifier, lw.kappa, lw.lambda).value;
  out.total = out.recon + lw.lambda_c * out.classification +
              lw.reg_scale * (out.pattern_length + out.w_shape_encoder + out.w_shape_classifier);
  return out;
}

Gradients backward(const ForwardTrace& trace, std::span<const ClassId> labels,
                   const ModelParams& params, const LossWeights& lw, double alpha,
                   unsigned threads) {
  check_alpha(alpha);
  const std::size_t batch = trace.rows.size();
  const std::size_t h = params.hidden();
  const std::size_t k_count = params.classes();
  if (labels.size() != batch) throw ContractViolation("backward: label count differs from batch");
  if (trace.encoder_sample.rows() != h || trace.encoder_sample.cols() != params.features()) {
    throw ContractViolation("backward: encoder sample shape differs from parameters");
  }

  // Upstream gradients per row.
  struct RowGrad {
    std::vector<std::pair<FeatureIndex, double>> decoder;  // d loss / d x_hat_j, nonzero only
    std::vector<double> logits;                            // d loss / d (W_C z)
    std::vector<double> pre;                               // through the gated STE, to W_Eb x
    std::vector<double> bias;
  };
  std::vector<RowGrad> rows(batch);
  parallel_for(batch, threads, [&](std::size_t r) {
    const auto& act = trace.rows[r];
    if (act.hidden.size() != h || act.class_probs.size() != k_count) {
      throw ContractViolation("backward: activation shape mismatch");
    }
    RowGrad& g = rows[r];
    for_each_mismatch(
        act.input, act.reconstruction,
        [&](FeatureIndex j) { g.decoder.emplace_back(j, -(1.0 - alpha)); },
        [&](FeatureIndex j) { g.decoder.emplace_back(j, alpha); });
    g.logits.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      g.logits[k] = lw.lambda_c * (act.class_probs[k] - (k == labels[r] ? 1.0 : 0.0));
    }
    g.pre.resize(h);
    g.bias.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
      // Decoder input gradient uses the continuous encoder weights.
      const auto w = params.encoder.row(i);
      double gz = 0.0;
      for (const auto& [j, gd] : g.decoder) gz += w[j] * gd;
      for (std::size_t k = 0; k < k_count; ++k) gz += params.classifier(k, i) * g.logits[k];
      if (act.hidden[i]) {
        g.pre[i] = gz;
        g.bias[i] = gz;
      } else {
        g.pre[i] = std::max(0.0, gz);
        g.bias[i] = 0.0;
      }
    }
  });

  Gradients grads = Gradients::zeros_like(params);
  parallel_for(h, threads, [&](std::size_t i) {
    auto ge = grads.encoder.row(i);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto& act = trace.rows[r];
      const RowGrad& g = rows[r];
      if (act.hidden[i]) {
        for (const auto& [j, gd] : g.decoder) ge[j] += gd;
        for (std::size_t k = 0; k < k_count; ++k) grads.classifier(k, i) += g.logits[k];
      }
      if (g.pre[i] != 0.0) {
        for (FeatureIndex j : act.input) ge[j] += g.pre[i];
      }
      grads.bias[i] += g.bias[i];
    }
  });

  add_regularizer_gradients(params, lw, grads);
  return grads;
}

Optimizer::Optimizer(const TrainConfig& config, const ModelParams& shape)
    : kind_(config.optimizer),
      lr_(config.lr),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps) {
  if (kind_ == OptimizerKind::adam) {
    first_ = Gradients::zeros_like(shape);
    second_ = Gradients::zeros_like(shape);
  }
}

void Optimizer::update(std::span<double> values, std::span<const double> grads,
                       std::span<double> m1, std::span<double> m2) const {
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t t = 0; t < values.size(); ++t) values[t] -= lr_ * grads[t];
    return;
  }
  for (std::size_t t = 0; t < values.size(); ++t) {
    m1[t] = beta1_ * m1[t] + (1.0 - beta1_) * grads[t];
    m2[t] = beta2_ * m2[t] + (1.0 - beta2_) * grads[t] * grads[t];
    const double m_hat = m1[t] / bias_correction1_;
    const double v_hat = m2[t] / bias_correction2_;
    values[t] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

void Optimizer::apply_step(ModelParams& params, const Gradients& grads, std::size_t epoch) {
  if (!grads.encoder.same_shape(params.encoder) || !grads.classifier.same_shape(params.classifier) ||
      grads.bias.size() != params.bias.size()) {
    throw ContractViolation("apply_step: gradient shape mismatch");
  }
  if (!grads.all_finite()) throw NumericalError("non-finite gradient", epoch);
  ++steps_;
  bias_correction1_ = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  bias_correction2_ = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const bool adam = kind_ == OptimizerKind::adam;
  update(params.encoder.values(), grads.encoder.values(),
         adam ? first_.encoder.values() : std::span<double>{},
         adam ? second_.encoder.values() : std::span<double>{});
  update(params.bias, grads.bias, adam ? std::span<double>(first_.bias) : std::span<double>{},
         adam ? std::span<double>(second_.bias) : std::span<double>{});
  update(params.classifier.values(), grads.classifier.values(),
         adam ? first_.classifier.values() : std::span<double>{},
         adam ? second_.classifier.values() : std::span<double>{});
  project_params(params);
}

void project_params(ModelParams& params) {
  for (double& w : params.encoder.values()) w = std::clamp(w, 0.0, 1.0);
  for (double& w : params.classifier.values()) w = std::clamp(w, 0.0, 1.0);
  for (double& b : params.bias) b = std::min(b, -1.0);
}

TrainResult train(const LabeledDataset& data, const TrainConfig& config,
                  std::optional<ModelParams> initial, const EpochCallback& on_epoch) {
  config.validate();
  const double alpha = density(data.data());
  check_alpha(alpha);
  const std::size_t n = data.num_rows();

  TrainResult result;
  if (initial) {
    if (initial->features() != data.num_features() || initial->classes() != data.num_classes()) {
      throw ContractViolation("initial parameters do not match the dataset shape");
    }
    initial->check_invariants();
    result.params = std::move(*initial);
  } else {
    Rng init_rng(derive_seed(config.seed, {stream::kInit}));
    result.params = init_params(config.hidden, data.num_features(), data.num_classes(), init_rng,
                                config.init_lo, config.init_hi);
  }
  ModelParams& params = result.params;
  Optimizer optimizer(config, params);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double kappa = config.kappa0;
  double lambda = config.lambda0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(config.seed, {stream::kShuffle, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    stats.epoch = epoch;
    stats.kappa = kappa;
    stats.lambda = lambda;
    double recon_sum = 0.0, class_sum = 0.0;

    std::vector<std::span<const FeatureIndex>> inputs;
    std::vector<ClassId> labels;
    for (std::size_t begin = 0, batch_id = 0; begin < n; begin += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      inputs.clear();
      labels.clear();
      for (std::size_t t = begin; t < end; ++t) {
        inputs.push_back(data.data().row(order[t]));
        labels.push_back(data.label(order[t]));
      }
      Rng sample_rng(derive_seed(config.seed, {stream::kSample, epoch, batch_id}));
      const ForwardTrace trace = forward(inputs, params, sample_rng, config.threads);
      for (std::size_t r = 0; r < trace.rows.size(); ++r) {
        const auto& act = trace.rows[r];
        recon_sum += recon_loss(std::span<const FeatureIndex>(act.input),
                                std::span<const FeatureIndex>(act.reconstruction), alpha);
        const auto cl = class_loss(labels[r], act.class_probs);
        class_sum += cl.value;
        stats.clamped_logs += cl.clamped;
      }
      const LossWeights lw{config.lambda_c, kappa, lambda,
                           static_cast<double>(end - begin) / static_cast<double>(n)};
      const Gradients grads = backward(trace, labels, params, lw, alpha, config.threads);
      optimizer.apply_step(params, grads, epoch);
    }

    stats.recon_loss = recon_sum / static_cast<double>(n);
    stats.class_loss = class_sum / static_cast<double>(n);
    const Matrix shifted = offset_encoder(params.encoder);
    stats.pattern_length = reg_pattern_length(shifted).value;
    stats.w_shape = reg_w_shape(shifted, kappa, lambda).value +
                    reg_w_shape(params.classifier, kappa, lambda).value;
    if (!std::isfinite(stats.recon_loss) || !std::isfinite(stats.class_loss)) {
      throw NumericalError("non-finite loss", epoch);
    }
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    kappa *= config.sched_gamma;
    lambda *= config.sched_gamma;
  }
  return result;
}

}  // namespace diffnaps
