#include "doctest.h"

#include <cmath>

#include "diffnaps/extract.hpp"
#include "diffnaps/train.hpp"
#include "oracles.hpp"

using namespace diffnaps;

namespace {

std::vector<FeatureIndex> feats(const Pattern& p) { return {p.features().begin(), p.features().end()}; }

// Class 0 rows are {0,1}, class 1 rows are {2,3}; neuron 0 encodes {0,1} and
// votes for class 0, neuron 1 encodes {2,3} and votes for class 1.
struct TwoBlockModel {
  LabeledDataset data{BinaryDataset(4, {{0, 1}, {0, 1}, {2, 3}, {2, 3}, {0, 1}}), {0, 0, 1, 1, 0}, 2};
  ModelParams params;
  TwoBlockModel() {
    params.encoder = Matrix(2, 4, 0.2);
    params.encoder(0, 0) = params.encoder(0, 1) = 0.9;
    params.encoder(1, 2) = params.encoder(1, 3) = 0.9;
    params.bias = {-1.0, -1.0};
    params.classifier = Matrix(2, 2, 0.3);
    params.classifier(0, 0) = params.classifier(1, 1) = 0.7;
  }
};

// Thresholded network evaluated densely from the description of the error.
double error_oracle(const ModelParams& p, double te, double tc, const LabeledDataset& d,
                    double lambda_c) {
  const std::size_t n = d.num_rows(), m = d.num_features(), h = p.hidden(), k = p.classes();
  std::size_t ones = 0;
  for (std::size_t r = 0; r < n; ++r) ones += d.data().row(r).size();
  const double alpha = static_cast<double>(ones) / static_cast<double>(n * m);
  double recon = 0.0;
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<int> x(m, 0), z(h, 0), xh(m, 0);
    for (FeatureIndex j : d.data().row(r)) x[j] = 1;
    for (std::size_t i = 0; i < h; ++i) {
      int pre = 0;
      for (std::size_t j = 0; j < m; ++j) pre += (p.encoder(i, j) > te) * x[j];
      z[i] = pre + std::ceil(p.bias[i]) >= 1;
      if (z[i]) {
        for (std::size_t j = 0; j < m; ++j) xh[j] |= p.encoder(i, j) > te;
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (x[j] && !xh[j]) recon += 1 - alpha;
      if (!x[j] && xh[j]) recon += alpha;
    }
    std::size_t best = 0, best_score = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t score = 0;
      for (std::size_t i = 0; i < h; ++i) score += z[i] && p.classifier(c, i) > tc;
      if (score > best_score) {
        best = c;
        best_score = score;
      }
    }
    wrong += best != d.label(r);
  }
  return recon / static_cast<double>(n) + lambda_c * static_cast<double>(wrong) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("extract_patterns examples") {
  Matrix w(2, 3);
  w(0, 0) = 0.9;
  w(0, 1) = 0.1;
  w(0, 2) = 0.8;
  w(1, 0) = 0.5;
  const auto ps = extract_patterns(w, 0.5);
  REQUIRE(ps.size() == 1);
  CHECK(ps[0].neuron == 0);
  CHECK(feats(ps[0].pattern) == std::vector<FeatureIndex>{0, 2});
  CHECK_THROWS_AS(extract_patterns(w, 1.0), ContractViolation);
  CHECK_THROWS_AS(extract_patterns(w, -0.1), ContractViolation);
}

TEST_CASE("extract_patterns matches an elementwise threshold oracle") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    Matrix w(oracle::uniform(rng, 1, 6), oracle::uniform(rng, 1, 9));
    for (double& v : w.values()) v = uniform01(rng);
    const double tau = 0.9 * uniform01(rng);
    const auto ps = extract_patterns(w, tau);
    std::size_t at = 0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      std::vector<FeatureIndex> expect;
      for (std::size_t j = 0; j < w.cols(); ++j) {
        if (w(i, j) > tau) expect.push_back(static_cast<FeatureIndex>(j));
      }
      if (expect.empty()) continue;
      REQUIRE(at < ps.size());
      CHECK(ps[at].neuron == i);
      CHECK(feats(ps[at].pattern) == expect);
      ++at;
    }
    CHECK(at == ps.size());
  }
}

TEST_CASE("assign_classes examples") {
  const std::vector<NeuronPattern> ps{{0, Pattern({1, 2})}, {1, Pattern({3, 4})}, {2, Pattern({5, 6})}};
  Matrix wc(2, 3);
  wc(0, 0) = 0.8;
  wc(1, 0) = 0.1;
  wc(0, 1) = 0.7;
  wc(1, 1) = 0.9;
  wc(0, 2) = 0.2;
  wc(1, 2) = 0.3;
  const auto dp = assign_classes(ps, wc, 0.5);
  REQUIRE(dp.per_class.size() == 2);
  REQUIRE(dp.per_class[0].size() == 2);
  CHECK(dp.per_class[0][0].neuron == 0);
  CHECK(dp.per_class[0][1].neuron == 1);
  REQUIRE(dp.per_class[1].size() == 1);
  CHECK(dp.per_class[1][0].neuron == 1);
  REQUIRE(dp.orphans.size() == 1);
  CHECK(dp.orphans[0].neuron == 2);
  CHECK(dp.total_assigned() == 3);
  CHECK(dp.tau_c == 0.5);
}

TEST_CASE("duplicate feature sets keep the neuron with the largest classifier weight") {
  const std::vector<NeuronPattern> ps{{0, Pattern({1, 2})}, {1, Pattern({1, 2})}, {2, Pattern({1, 2})}};
  Matrix wc(2, 3, 0.0);
  wc(0, 0) = 0.6;
  wc(0, 1) = 0.9;
  wc(0, 2) = 0.9;
  wc(1, 0) = 0.8;
  wc(1, 2) = 0.7;
  const auto dp = assign_classes(ps, wc, 0.5);
  REQUIRE(dp.per_class[0].size() == 1);
  CHECK(dp.per_class[0][0].neuron == 1);  // tie between 1 and 2 goes to the lower id
  REQUIRE(dp.per_class[1].size() == 1);
  CHECK(dp.per_class[1][0].neuron == 0);
  CHECK(dp.orphans.empty());
}

TEST_CASE("discretized_error examples") {
  TwoBlockModel fx;
  CHECK(discretized_error(fx.params, 0.5, 0.5, fx.data, 1.0) == 0.0);
  // nothing survives 0.95: x_hat = 0 and every row is scored as class 0
  const double alpha = density(fx.data.data());
  const double all_missing = 2 * (1 - alpha);
  CHECK(discretized_error(fx.params, 0.95, 0.5, fx.data, 0.0) == doctest::Approx(all_missing));
  CHECK(discretized_error(fx.params, 0.95, 0.5, fx.data, 1.0) ==
        doctest::Approx(all_missing + 2.0 / 5.0));
  CHECK(discretized_error(fx.params, 0.3, 0.1, fx.data, 1.0) ==
        discretized_error(fx.params, 0.3, 0.1, fx.data, 1.0));
  auto wrong_shape = fx.params;
  wrong_shape.encoder = Matrix(2, 5, 0.0);
  CHECK_THROWS_WITH_AS(discretized_error(wrong_shape, 0.5, 0.5, fx.data, 1.0),
                       doctest::Contains("does not match dataset"), ContractViolation);
}

TEST_CASE("discretized_error matches a dense oracle on seeded instances") {
  Rng rng(derive_seed(61, {4}));
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = oracle::uniform(rng, 2, 10), k = oracle::uniform(rng, 2, 3);
    const std::size_t n = oracle::uniform(rng, k, 20), h = oracle::uniform(rng, 1, 6);
    auto dense = oracle::random_dense(rng, n, m, 0.5);
    dense[0][0] = 1;
    const auto data = oracle::to_labeled(dense, m, oracle::random_labels(rng, n, k), k);
    auto p = init_params(h, m, k, rng, 0.0, 1.0);
    for (double& w : p.classifier.values()) w = uniform01(rng);
    for (double& b : p.bias) b = -1.0 - 2.0 * uniform01(rng);
    const double te = 0.05 * static_cast<double>(oracle::uniform(rng, 1, 19));
    const double tc = 0.05 * static_cast<double>(oracle::uniform(rng, 1, 19));
    const double lc = 3.0 * uniform01(rng);
    CHECK(discretized_error(p, te, tc, data, lc) ==
          doctest::Approx(error_oracle(p, te, tc, data, lc)).epsilon(1e-12));
  }
}

TEST_CASE("grid search examples") {
  TwoBlockModel fx;
  const std::vector<double> one_e{0.35}, one_c{0.85};
  const auto single = grid_search_thresholds(fx.params, fx.data, one_e, one_c, 1.0);
  CHECK(single.tau_e == 0.35);
  CHECK(single.tau_c == 0.85);
  CHECK(single.patterns.tau_e == 0.35);

  const std::vector<double> grid{0.1, 0.5, 0.95};
  const auto sel = grid_search_thresholds(fx.params, fx.data, grid, grid, 1.0);
  CHECK(sel.tau_e == 0.5);
  CHECK(sel.tau_c == 0.5);
  CHECK(sel.error == 0.0);
  REQUIRE(sel.patterns.per_class[0].size() == 1);
  CHECK(feats(sel.patterns.per_class[0][0].pattern) == std::vector<FeatureIndex>{0, 1});
  REQUIRE(sel.patterns.per_class[1].size() == 1);
  CHECK(feats(sel.patterns.per_class[1][0].pattern) == std::vector<FeatureIndex>{2, 3});

  const auto full = default_threshold_grid();
  REQUIRE(full.size() == 19);
  CHECK(full.front() == doctest::Approx(0.05));
  CHECK(full.back() == doctest::Approx(0.95));
  const auto tie = grid_search_thresholds(fx.params, fx.data, full, full, 1.0);
  CHECK(tie.error == 0.0);
  // off-pattern weights equal 0.2, which the strict threshold already excludes
  CHECK(tie.tau_e == doctest::Approx(0.2));
  CHECK(tie.tau_c == doctest::Approx(0.3));

  const auto again = grid_search_thresholds(fx.params, fx.data, full, full, 1.0, 4);
  CHECK(again.tau_e == tie.tau_e);
  CHECK(again.tau_c == tie.tau_c);
  CHECK(again.patterns == tie.patterns);

  const std::vector<double> empty;
  CHECK_THROWS_AS(grid_search_thresholds(fx.params, fx.data, empty, full, 1.0), ContractViolation);
  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(grid_search_thresholds(fx.params, fx.data, bad, full, 1.0), ContractViolation);
}

TEST_CASE("grid search returns the minimum of discretized_error over the grid") {
  Rng rng(derive_seed(62, {5}));
  const auto grid = default_threshold_grid();
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 8, k = 2, n = 16, h = 4;
    auto dense = oracle::random_dense(rng, n, m, 0.5);
    dense[0][0] = 1;
    const auto data = oracle::to_labeled(dense, m, oracle::random_labels(rng, n, k), k);
    auto p = init_params(h, m, k, rng, 0.0, 1.0);
    for (double& w : p.classifier.values()) w = uniform01(rng);
    const auto sel = grid_search_thresholds(p, data, grid, grid, 1.0);
    double best = 1e300;
    double be = 0, bc = 0;
    for (double e : grid) {
      for (double c : grid) {
        const double err = error_oracle(p, e, c, data, 1.0);
        if (err < best - 1e-12) {
          best = err;
          be = e;
          bc = c;
        }
      }
    }
    CHECK(sel.error == doctest::Approx(best).epsilon(1e-12));
    CHECK(sel.tau_e == be);
    CHECK(sel.tau_c == bc);
  }
}
