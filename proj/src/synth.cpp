#include "diffnaps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "diffnaps/parallel.hpp"
#include "diffnaps/rng.hpp"

namespace diffnaps {

std::size_t SyntheticSpec::shared_len_lo() const {
  return static_cast<std::size_t>(std::ceil(shared_len_frac_lo * static_cast<double>(m)));
}

std::size_t SyntheticSpec::shared_len_hi() const {
  return static_cast<std::size_t>(std::ceil(shared_len_frac_hi * static_cast<double>(m)));
}

namespace {

// log C(n, k)
double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
         std::lgamma(static_cast<double>(n - k) + 1);
}

// Number of distinct subsets of {0..m-1} with size in [lo, hi], saturated at 1e18.
double distinct_patterns(std::size_t m, std::size_t lo, std::size_t hi) {
  double total = 0.0;
  for (std::size_t len = lo; len <= hi && len <= m; ++len) {
    total += std::exp(std::min(log_binomial(m, len), 41.0));
  }
  return total;
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Floyd's algorithm: `count` distinct values from [0, range), sorted.
std::vector<std::uint32_t> sample_distinct(Rng& rng, std::size_t range, std::size_t count) {
  std::set<std::uint32_t> chosen;
  for (std::size_t j = range - count; j < range; ++j) {
    const auto t = static_cast<std::uint32_t>(uniform_index(rng, 0, j));
    if (!chosen.insert(t).second) chosen.insert(static_cast<std::uint32_t>(j));
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& what) {
    throw ContractViolation("infeasible synthetic spec: " + what);
  };
  if (classes < 2) fail("classes must be >= 2");
  if (n_per_class < 1) fail("n_per_class must be >= 1");
  if (m < 2) fail("m must be >= 2");
  if (class_len_lo < 1 || class_len_lo > class_len_hi) fail("need 1 <= class_len_lo <= class_len_hi");
  if (m < class_len_hi) {
    fail("m = " + std::to_string(m) + " is smaller than class_len_hi = " +
         std::to_string(class_len_hi));
  }
  if (!(destructive_prob >= 0.0 && destructive_prob <= 1.0)) fail("destructive_prob outside [0,1]");
  if (!(label_fidelity >= 0.0 && label_fidelity <= 1.0)) fail("label_fidelity outside [0,1]");
  if (!(shared_len_frac_lo >= 0.0 && shared_len_frac_lo <= shared_len_frac_hi &&
        shared_len_frac_hi <= 1.0)) {
    fail("need 0 <= shared_len_frac_lo <= shared_len_frac_hi <= 1");
  }
  if (planted_class_per_row > patterns_per_class) {
    fail("planted_class_per_row exceeds patterns_per_class");
  }
  if (planted_shared_per_row > shared_patterns) {
    fail("planted_shared_per_row exceeds shared_patterns");
  }
  if (shared_patterns > 0 && shared_len_lo() < 1) fail("shared pattern length would be 0");
  const double needed = static_cast<double>(classes * patterns_per_class + shared_patterns);
  double available = distinct_patterns(m, class_len_lo, class_len_hi);
  if (shared_patterns > 0) available += distinct_patterns(m, shared_len_lo(), shared_len_hi());
  if (available < needed) fail("fewer distinct patterns than requested");
}

SyntheticSpec low_dim_variant(const SyntheticSpec& spec) {
  if (spec.m >= 1000) {
    throw ContractViolation("low_dim_variant requires m < 1000 (got " + std::to_string(spec.m) +
                            ")");
  }
  SyntheticSpec out = spec;
  out.patterns_per_class = 5;
  out.shared_patterns = 0;
  out.planted_shared_per_row = 0;
  return out;
}

SyntheticData generate(const SyntheticSpec& spec, unsigned threads) {
  spec.validate();
  const std::size_t m = spec.m;
  const std::size_t k_count = spec.classes;

  GroundTruth truth;
  {
    Rng rng(derive_seed(spec.seed, {stream::kPatterns}));
    std::set<std::vector<std::uint32_t>> used;
    const std::size_t needed = k_count * spec.patterns_per_class + spec.shared_patterns;
    std::size_t budget = 1000 * needed + 1000;
    auto draw = [&](std::size_t lo, std::size_t hi) {
      while (budget-- > 0) {
        const std::size_t len = uniform_index(rng, lo, std::min(hi, m));
        auto features = sample_distinct(rng, m, len);
        if (used.insert(features).second) return Pattern({features.begin(), features.end()});
      }
      throw ContractViolation("infeasible synthetic spec: could not draw distinct patterns");
    };
    truth.class_patterns.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t t = 0; t < spec.patterns_per_class; ++t) {
        truth.class_patterns[k].push_back(draw(spec.class_len_lo, spec.class_len_hi));
      }
    }
    for (std::size_t t = 0; t < spec.shared_patterns; ++t) {
      truth.shared_patterns.push_back(draw(spec.shared_len_lo(), spec.shared_len_hi()));
    }
  }

  const std::size_t n = k_count * spec.n_per_class;
  std::vector<std::vector<FeatureIndex>> rows(n);
  std::vector<ClassId> labels(n);
  std::vector<ClassId> generating(n);
  parallel_for(n, threads, [&](std::size_t r) {
    Rng rng(derive_seed(spec.seed, {stream::kRows, r}));
    const auto cls = static_cast<ClassId>(r / spec.n_per_class);
    generating[r] = cls;

    std::vector<FeatureIndex> planted;
    for (auto t : sample_distinct(rng, spec.shared_patterns, spec.planted_shared_per_row)) {
      const auto f = truth.shared_patterns[t].features();
      planted.insert(planted.end(), f.begin(), f.end());
    }
    for (auto t : sample_distinct(rng, spec.patterns_per_class, spec.planted_class_per_row)) {
      const auto f = truth.class_patterns[cls][t].features();
      planted.insert(planted.end(), f.begin(), f.end());
    }
    std::sort(planted.begin(), planted.end());
    planted.erase(std::unique(planted.begin(), planted.end()), planted.end());

    // Additive noise: distinct cells that are 0 after planting.
    std::vector<FeatureIndex> added;
    const std::size_t zeros = m - planted.size();
    if (spec.additive_flips >= zeros) {
      for (std::size_t j = 0, p = 0; j < m; ++j) {
        if (p < planted.size() && planted[p] == j) {
          ++p;
        } else {
          added.push_back(static_cast<FeatureIndex>(j));
        }
      }
    } else {
      // Pick ranks among the zero cells, then map rank -> feature index.
      const auto ranks = sample_distinct(rng, zeros, spec.additive_flips);
      std::size_t p = 0;
      for (auto rank : ranks) {
        // feature = rank + number of planted cells at or below it
        std::size_t j = rank + p;
        while (p < planted.size() && planted[p] <= j) {
          ++p;
          j = rank + p;
        }
        added.push_back(static_cast<FeatureIndex>(j));
      }
    }

    // Destructive noise on planted cells only, once per cell.
    std::vector<FeatureIndex> row;
    row.reserve(planted.size() + added.size());
    for (FeatureIndex j : planted) {
      if (!bernoulli(rng, spec.destructive_prob)) row.push_back(j);
    }
    row.insert(row.end(), added.begin(), added.end());
    std::sort(row.begin(), row.end());
    rows[r] = std::move(row);

    if (bernoulli(rng, spec.label_fidelity)) {
      labels[r] = cls;
    } else {
      const auto other = static_cast<ClassId>(uniform_index(rng, 0, k_count - 2));
      labels[r] = other < cls ? other : other + 1;
    }
  });

  SyntheticData out;
  out.dataset = LabeledDataset(BinaryDataset(m, rows), std::move(labels), k_count);
  out.truth = std::move(truth);
  out.generating_class = std::move(generating);
  return out;
}

}  // namespace diffnaps
