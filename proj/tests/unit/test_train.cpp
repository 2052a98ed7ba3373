#include "doctest.h"

#include <cmath>
#include <numeric>

#include "diffnaps/train.hpp"
#include "loss_oracles.hpp"
#include "oracles.hpp"

using namespace diffnaps;

namespace {

std::vector<FeatureIndex> ones(const std::vector<int>& row) {
  std::vector<FeatureIndex> out;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j]) out.push_back(static_cast<FeatureIndex>(j));
  }
  return out;
}

BinaryMatrix bits_from(const oracle::Dense& d) {
  BinaryMatrix b(d.size(), d[0].size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d[r].size(); ++c) {
      if (d[r][c]) b.push(r, c);
    }
  }
  return b;
}

struct Batch {
  std::vector<std::vector<FeatureIndex>> rows;
  std::vector<std::span<const FeatureIndex>> spans;
  std::vector<ClassId> labels;

  Batch(const oracle::Dense& dense, std::vector<ClassId> y) : labels(std::move(y)) {
    for (const auto& r : dense) rows.push_back(ones(r));
    spans.assign(rows.begin(), rows.end());
  }
};

// Two class-exclusive patterns ({0..4} for class 0, {5..9} for class 1) with
// a little additive noise on the remaining features.
LabeledDataset planted_two_patterns(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<FeatureIndex>> rows;
  std::vector<ClassId> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId k = i < n / 2 ? 0 : 1;
    std::vector<FeatureIndex> r;
    for (FeatureIndex j = 0; j < 5; ++j) r.push_back(static_cast<FeatureIndex>(5 * k + j));
    if (bernoulli(rng, 0.3)) r.push_back(static_cast<FeatureIndex>(oracle::uniform(rng, 10, m - 1)));
    rows.push_back(r);
    labels.push_back(k);
  }
  return LabeledDataset(BinaryDataset(m, rows), labels, 2);
}

}  // namespace

TEST_CASE("recon_loss examples") {
  const std::vector<std::uint8_t> x{1, 0, 1}, same{1, 0, 1};
  CHECK(recon_loss(x, same, 0.3) == 0.0);
  const std::vector<std::uint8_t> a{1, 0}, a_hat{0, 0};
  CHECK(recon_loss(a, a_hat, 0.5) == doctest::Approx(0.5));
  const std::vector<std::uint8_t> b{1, 0, 0, 0}, b_hat{0, 0, 0, 1};
  CHECK(recon_loss(b, b_hat, 0.25) == doctest::Approx(1.0));
  const std::vector<FeatureIndex> bs{0}, bs_hat{3};
  CHECK(recon_loss(std::span<const FeatureIndex>(bs), std::span<const FeatureIndex>(bs_hat), 0.25) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(recon_loss(a, a_hat, 0.0), ContractViolation);
  CHECK_THROWS_AS(recon_loss(a, a_hat, 1.0), ContractViolation);
}

TEST_CASE("sparse and dense recon_loss agree") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = oracle::uniform(rng, 1, 20);
    const auto d = oracle::random_dense(rng, 2, m, 0.4);
    const double alpha = 0.05 + 0.9 * uniform01(rng);
    std::vector<std::uint8_t> x(d[0].begin(), d[0].end()), xh(d[1].begin(), d[1].end());
    const auto sx = ones(d[0]), sxh = ones(d[1]);
    CHECK(recon_loss(std::span<const FeatureIndex>(sx), std::span<const FeatureIndex>(sxh), alpha) ==
          doctest::Approx(recon_loss(x, xh, alpha)));
  }
}

TEST_CASE("class_loss examples") {
  const std::vector<double> onehot{1.0, 0.0}, uniform{0.5, 0.5}, soft{0.7311, 0.2689}, zero{0.0, 1.0};
  CHECK(class_loss(0, onehot).value == 0.0);
  CHECK(class_loss(0, uniform).value == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(class_loss(0, soft).value == doctest::Approx(0.3133).epsilon(1e-3));
  const auto clamped = class_loss(0, zero);
  CHECK(clamped.clamped);
  CHECK(clamped.value == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(class_loss(2, uniform), ContractViolation);
}

TEST_CASE("reg_pattern_length examples") {
  Matrix half(1, 2, 0.5);
  const auto t = reg_pattern_length(half);
  CHECK(t.value == doctest::Approx(1.0));
  CHECK(t.gradient(0, 0) == doctest::Approx(2.0));
  CHECK(t.gradient(0, 1) == doctest::Approx(2.0));
  Matrix short_row(1, 2, 0.4);
  const auto g = reg_pattern_length(short_row);
  CHECK(g.value == doctest::Approx(0.64));
  CHECK(g.gradient(0, 0) == 0.0);
  CHECK(g.gradient(0, 1) == 0.0);
  CHECK(reg_pattern_length(short_row, false).gradient(0, 0) == doctest::Approx(1.6));
}

TEST_CASE("reg_pattern_length gradient matches finite differences on a seeded 4x6 matrix") {
  Rng rng(46);
  Matrix w(4, 6);
  for (double& v : w.values()) v = uniform01(rng);
  const auto fd = oracle::finite_difference(oracle::row_length_penalty, w, 1e-5);
  const auto t = reg_pattern_length(w, false);
  CHECK(t.value == doctest::Approx(oracle::row_length_penalty(w)).epsilon(1e-12));
  CHECK(oracle::max_abs_diff(fd, t.gradient) <= 1e-6);
}

TEST_CASE("reg_w_shape examples") {
  Matrix ends(1, 2);
  ends(0, 1) = 1.0;
  CHECK(reg_w_shape(ends, 1.0, 1.0).value == 0.0);
  Matrix mid(1, 1, 0.5);
  const auto t = reg_w_shape(mid, 1.0, 1.0);
  CHECK(t.value == doctest::Approx(0.75));
  // tie at 0.5 takes the branch toward 0: kappa * 1 + 2 * lambda * 0.5
  CHECK(t.gradient(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("reg_w_shape gradient matches finite differences away from kinks") {
  Rng rng(47);
  const std::function<double(const Matrix&)> pen = [](const Matrix& w) {
    return oracle::binary_pull_penalty(w, 0.7, 1.3);
  };
  for (int trial = 0; trial < 20; ++trial) {
    Matrix w(5, 7);
    for (double& v : w.values()) {
      do v = uniform01(rng);
      while (std::abs(v) < 0.05 || std::abs(v - 0.5) < 0.05 || std::abs(v - 1.0) < 0.05);
    }
    const auto t = reg_w_shape(w, 0.7, 1.3);
    CHECK(t.value == doctest::Approx(pen(w)).epsilon(1e-12));
    CHECK(oracle::max_abs_diff(oracle::finite_difference(pen, w, 1e-5), t.gradient) <= 1e-6);
  }
}

TEST_CASE("offset_encoder subtracts 1/m and clamps at zero") {
  Matrix w(1, 4);
  w(0, 0) = 0.1;
  w(0, 1) = 0.25;
  w(0, 2) = 1.0;
  const auto o = offset_encoder(w);
  CHECK(o(0, 0) == 0.0);
  CHECK(o(0, 1) == 0.0);
  CHECK(o(0, 2) == doctest::Approx(0.75));
}

TEST_CASE("total_loss is zero for a perfect unregularized reconstruction") {
  // one neuron encoding {0,1}; classifier weight irrelevant with lambda_c = 0
  ModelParams p;
  p.encoder = Matrix(1, 3);
  p.bias = {-1.0};
  p.classifier = Matrix(2, 1);
  Batch b({{1, 1, 0}}, {0});
  const auto trace = forward_with(b.spans, bits_from({{1, 1, 0}}), p);
  LossWeights lw{0.0, 0.0, 0.0, 1.0};
  // continuous weights are all zero so every regularizer is zero as well
  const auto loss = total_loss(trace, b.labels, p, lw, 0.4);
  CHECK(loss.recon == 0.0);
  CHECK(loss.total == 0.0);
}

TEST_CASE("total_loss on one row equals the sum of its parts") {
  Rng rng(5);
  auto p = init_params(3, 5, 2, rng, 0.0, 1.0);
  Batch b({{1, 0, 1, 1, 0}}, {1});
  Rng s(9);
  const auto trace = forward(b.spans, p, s);
  const double alpha = 0.3;
  const LossWeights lw{2.0, 0.1, 0.2, 0.5};
  const auto loss = total_loss(trace, b.labels, p, lw, alpha);
  const auto& row = trace.rows[0];
  const double parts =
      recon_loss(std::span<const FeatureIndex>(row.input),
                 std::span<const FeatureIndex>(row.reconstruction), alpha) +
      2.0 * class_loss(1, row.class_probs).value +
      0.5 * (reg_pattern_length(offset_encoder(p.encoder)).value +
             reg_w_shape(offset_encoder(p.encoder), 0.1, 0.2).value +
             reg_w_shape(p.classifier, 0.1, 0.2).value);
  CHECK(loss.total == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("total_loss and backward match a dense re-implementation") {
  Rng rng(derive_seed(99, {2}));
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = oracle::uniform(rng, 3, 10);
    const std::size_t h = oracle::uniform(rng, 1, 5);
    const std::size_t k = oracle::uniform(rng, 2, 3);
    const std::size_t n = oracle::uniform(rng, 1, 6);
    auto p = init_params(h, m, k, rng, 0.0, 1.0);
    for (double& w : p.classifier.values()) w = uniform01(rng);
    for (double& v : p.bias) v = -1.0 - 1.5 * uniform01(rng);
    const auto dense = oracle::random_dense(rng, n, m, 0.5);
    std::vector<ClassId> labels(n);
    for (auto& y : labels) y = static_cast<ClassId>(oracle::uniform(rng, 0, k - 1));
    Batch b(dense, labels);
    const auto trace = forward(b.spans, p, rng);
    const double alpha = 0.1 + 0.8 * uniform01(rng);
    const LossWeights lw{uniform01(rng) * 3, uniform01(rng), uniform01(rng), uniform01(rng)};

    std::vector<oracle::DenseRow> rows;
    for (std::size_t r = 0; r < n; ++r) {
      rows.push_back(oracle::dense_forward(dense[r], labels[r], trace.encoder_sample, p));
      CHECK(ones(rows.back().x_hat) == trace.rows[r].reconstruction);
    }
    CHECK(total_loss(trace, labels, p, lw, alpha).total ==
          doctest::Approx(oracle::dense_objective(rows, p, lw, alpha)).epsilon(1e-10));
    const auto got = backward(trace, labels, p, lw, alpha);
    const auto want = oracle::dense_backward(rows, p, lw, alpha);
    CHECK(oracle::max_abs_diff(got.encoder, want.encoder) <= 1e-10);
    CHECK(oracle::max_abs_diff(got.classifier, want.classifier) <= 1e-10);
    for (std::size_t i = 0; i < h; ++i) CHECK(got.bias[i] == doctest::Approx(want.bias[i]));
    const auto threaded = backward(trace, labels, p, lw, alpha, 3);
    CHECK(threaded.encoder == got.encoder);
    CHECK(threaded.classifier == got.classifier);
    CHECK(threaded.bias == got.bias);
  }
}

TEST_CASE("gated straight-through: inactive neuron blocks a negative upstream gradient") {
  // neuron 0 silent; the input misses features 0 and 1, so the upstream gradient is negative
  ModelParams p;
  p.encoder = Matrix(1, 4);
  p.encoder(0, 0) = 0.5;
  p.encoder(0, 1) = 0.5;
  p.bias = {-1.0};
  p.classifier = Matrix(2, 1);
  Batch b({{1, 1, 0, 0}}, {0});
  const auto trace = forward_with(b.spans, BinaryMatrix(1, 4), p);
  REQUIRE(trace.rows[0].hidden[0] == 0);
  const auto g = backward(trace, b.labels, p, LossWeights{0.0, 0.0, 0.0, 1.0}, 0.5);
  for (double v : g.encoder.values()) CHECK(v == 0.0);
  CHECK(g.bias[0] == 0.0);
}

TEST_CASE("gated straight-through: inactive neuron passes a positive upstream gradient to inputs") {
  // neuron 1 fires and writes a spurious feature 2; silent neuron 0 has weight on feature 2
  ModelParams p;
  p.encoder = Matrix(2, 4);
  p.encoder(0, 2) = 0.6;
  p.bias = {-1.0, -1.0};
  p.classifier = Matrix(2, 2);
  Batch b({{1, 1, 0, 0}}, {0});
  const auto trace = forward_with(b.spans, bits_from({{0, 0, 0, 0}, {1, 1, 1, 0}}), p);
  REQUIRE(trace.rows[0].hidden == std::vector<std::uint8_t>{0, 1});
  const double alpha = 0.5;
  const auto g = backward(trace, b.labels, p, LossWeights{0.0, 0.0, 0.0, 1.0}, alpha);
  CHECK(g.encoder(0, 0) == doctest::Approx(0.6 * alpha));
  CHECK(g.encoder(0, 1) == doctest::Approx(0.6 * alpha));
  CHECK(g.encoder(0, 2) == 0.0);
  CHECK(g.bias[0] == 0.0);
  // the active neuron receives its upstream gradient unchanged on bias and inputs
  const double upstream = p.encoder(1, 2) * alpha;
  CHECK(g.bias[1] == doctest::Approx(upstream));
  CHECK(g.encoder(1, 2) == doctest::Approx(alpha));
}

TEST_CASE("active neuron passes a negative upstream gradient unchanged") {
  ModelParams p;
  p.encoder = Matrix(1, 3, 0.0);
  p.encoder(0, 2) = 0.8;
  p.bias = {-1.0};
  p.classifier = Matrix(2, 1);
  Batch b({{1, 1, 1}}, {0});
  const auto trace = forward_with(b.spans, bits_from({{1, 1, 0}}), p);
  REQUIRE(trace.rows[0].hidden[0] == 1);
  const double alpha = 0.25;
  const auto g = backward(trace, b.labels, p, LossWeights{0.0, 0.0, 0.0, 1.0}, alpha);
  const double upstream = 0.8 * -(1.0 - alpha);
  CHECK(g.bias[0] == doctest::Approx(upstream));
  CHECK(g.encoder(0, 0) == doctest::Approx(upstream));
  CHECK(g.encoder(0, 2) == doctest::Approx(upstream - (1.0 - alpha)));
}

TEST_CASE("classifier gradient matches finite differences with the encoder frozen") {
  Rng rng(derive_seed(7, {3}));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = oracle::uniform(rng, 4, 10);
    const std::size_t h = oracle::uniform(rng, 2, 6);
    const std::size_t k = oracle::uniform(rng, 2, 4);
    const std::size_t n = oracle::uniform(rng, 1, 8);
    auto p = init_params(h, m, k, rng, 0.3, 1.0);
    for (double& w : p.classifier.values()) w = uniform01(rng);
    Batch b(oracle::random_dense(rng, n, m, 0.6), oracle::random_labels(rng, n, std::min(n, k)));
    const auto sample = stochastic_binarize(p.encoder, rng);
    const double lambda_c = 0.5 + 2.0 * uniform01(rng);
    const auto f = [&](const Matrix& wc) {
      ModelParams q = p;
      q.classifier = wc;
      const auto t = forward_with(b.spans, sample, q);
      double total = 0.0;
      for (std::size_t r = 0; r < n; ++r) total += class_loss(b.labels[r], t.rows[r].class_probs).value;
      return lambda_c * total;
    };
    const auto trace = forward_with(b.spans, sample, p);
    const auto g = backward(trace, b.labels, p, LossWeights{lambda_c, 0.0, 0.0, 1.0}, 0.5);
    CHECK(oracle::max_abs_diff(g.classifier, oracle::finite_difference(f, p.classifier, 1e-5)) <= 1e-5);
  }
}

TEST_CASE("backward rejects mismatched shapes") {
  Rng rng(1);
  const auto p = init_params(2, 4, 2, rng);
  Batch b({{1, 0, 1, 0}}, {0});
  const auto trace = forward(b.spans, p, rng);
  const std::vector<ClassId> two{0, 1};
  CHECK_THROWS_AS(backward(trace, two, p, LossWeights{}, 0.5), ContractViolation);
  const auto other = init_params(3, 4, 2, rng);
  CHECK_THROWS_AS(backward(trace, b.labels, other, LossWeights{}, 0.5), ContractViolation);
}

TEST_CASE("apply_step clips weights and clamps bias") {
  Rng rng(2);
  auto p = init_params(2, 3, 2, rng);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.lr = 1.0;

  SUBCASE("zero gradients leave valid parameters unchanged") {
    const auto before = p;
    Optimizer opt(cfg, p);
    opt.apply_step(p, Gradients::zeros_like(p));
    CHECK(p == before);
    TrainConfig adam = cfg;
    adam.optimizer = OptimizerKind::adam;
    Optimizer a(adam, p);
    a.apply_step(p, Gradients::zeros_like(p));
    CHECK(p == before);
  }
  SUBCASE("weight pushed to 1.3 is stored as 1.0; bias pushed to -0.2 becomes -1") {
    p.encoder(0, 0) = 0.5;
    auto g = Gradients::zeros_like(p);
    g.encoder(0, 0) = -0.8;
    g.classifier(1, 1) = 5.0;
    g.bias[0] = -0.8;  // -1 - (-0.8) = -0.2
    Optimizer opt(cfg, p);
    opt.apply_step(p, g);
    CHECK(p.encoder(0, 0) == 1.0);
    CHECK(p.classifier(1, 1) == 0.0);
    CHECK(p.bias[0] == -1.0);
  }
  SUBCASE("non-finite gradient raises a numerical error with the epoch") {
    auto g = Gradients::zeros_like(p);
    g.bias[1] = std::nan("");
    Optimizer opt(cfg, p);
    CHECK_THROWS_WITH_AS(opt.apply_step(p, g, 4), doctest::Contains("epoch 4"), NumericalError);
  }
}

TEST_CASE("Adam first step moves each weight by about lr against the gradient sign") {
  Rng rng(2);
  auto p = init_params(1, 3, 2, rng, 0.5, 0.5);
  TrainConfig cfg;
  cfg.lr = 0.01;
  auto g = Gradients::zeros_like(p);
  g.encoder(0, 0) = 3.0;
  g.encoder(0, 1) = -0.002;
  Optimizer opt(cfg, p);
  opt.apply_step(p, g);
  CHECK(p.encoder(0, 0) == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(p.encoder(0, 1) == doctest::Approx(0.51).epsilon(1e-5));
  CHECK(p.encoder(0, 2) == 0.5);
}

TEST_CASE("TrainConfig validation names the field") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto&& edit, const char* what) {
    TrainConfig x;
    edit(x);
    CHECK_THROWS_WITH_AS(x.validate(), doctest::Contains(what), ContractViolation);
  };
  bad([](TrainConfig& x) { x.hidden = 0; }, "hidden");
  bad([](TrainConfig& x) { x.lambda_c = -1; }, "lambda_c");
  bad([](TrainConfig& x) { x.sched_gamma = 1.0; }, "sched_gamma");
  bad([](TrainConfig& x) { x.lr = 0; }, "lr");
  bad([](TrainConfig& x) { x.batch_size = 0; }, "batch_size");
  bad([](TrainConfig& x) { x.init_hi = 1.5; }, "init");
  CHECK(parse_optimizer("sgd") == OptimizerKind::sgd);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ContractViolation);
}

TEST_CASE("zero epochs returns the initial parameters and an empty report") {
  const auto data = planted_two_patterns(40, 12, 1);
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 0;
  cfg.seed = 5;
  const auto r = train(data, cfg);
  Rng init(derive_seed(5, {stream::kInit}));
  CHECK(r.params == init_params(4, 12, 2, init));
  CHECK(r.report.epochs.empty());
}

TEST_CASE("training is reproducible and independent of the thread count") {
  const auto data = planted_two_patterns(120, 20, 2);
  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.seed = 31;
  const auto a = train(data, cfg);
  const auto b = train(data, cfg);
  cfg.threads = 4;
  const auto c = train(data, cfg);
  CHECK(a.params == b.params);
  CHECK(a.params == c.params);
  REQUIRE(a.report.epochs.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(a.report.epochs[e].same_values(b.report.epochs[e]));
    CHECK(a.report.epochs[e].same_values(c.report.epochs[e]));
  }
  CHECK(a.report.epochs[1].kappa == doctest::Approx(cfg.kappa0 * cfg.sched_gamma));
}

TEST_CASE("training on two planted patterns cuts reconstruction loss below a quarter") {
  const auto data = planted_two_patterns(500, 30, 3);
  TrainConfig cfg;
  cfg.hidden = 10;
  cfg.epochs = 50;
  cfg.lr = 0.01;
  cfg.batch_size = 32;
  cfg.seed = 8;
  std::size_t callbacks = 0;
  const auto r = train(data, cfg, std::nullopt, [&](const EpochStats&) { ++callbacks; });
  CHECK(callbacks == 50);
  REQUIRE(r.report.epochs.size() == 50);
  const double first = r.report.epochs.front().recon_loss;
  const double last = r.report.epochs.back().recon_loss;
  INFO("epoch 1 recon ", first, ", epoch 50 recon ", last);
  CHECK(last < 0.25 * first);
  CHECK_NOTHROW(r.params.check_invariants());
}

TEST_CASE("labels are never read when classification and regularizer weights are zero") {
  const auto data = planted_two_patterns(100, 16, 4);
  std::vector<ClassId> flipped(data.labels().begin(), data.labels().end());
  Rng rng(3);
  std::shuffle(flipped.begin(), flipped.end(), rng);
  const LabeledDataset permuted(data.data(), flipped, 2);
  TrainConfig cfg;
  cfg.hidden = 5;
  cfg.lambda_c = 0.0;
  cfg.kappa0 = 0.0;
  cfg.lambda0 = 0.0;
  cfg.batch_size = 10;
  cfg.seed = 12;
  cfg.lr = 0.01;
  for (std::size_t epochs = 1; epochs <= 3; ++epochs) {
    cfg.epochs = epochs;
    const auto a = train(data, cfg);
    const auto b = train(permuted, cfg);
    CHECK(a.params == b.params);
    CHECK(a.report.epochs.back().recon_loss == b.report.epochs.back().recon_loss);
  }
}

TEST_CASE("train rejects degenerate data and mismatched initial parameters") {
  const LabeledDataset all_zero(BinaryDataset(3, {{}, {}}), {0, 1}, 2);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(all_zero, cfg), ContractViolation);
  const auto data = planted_two_patterns(20, 12, 1);
  Rng rng(1);
  CHECK_THROWS_AS(train(data, cfg, init_params(3, 11, 2, rng)), ContractViolation);
  auto resumed = init_params(3, 12, 2, rng);
  CHECK_NOTHROW(train(data, cfg, resumed));
}
