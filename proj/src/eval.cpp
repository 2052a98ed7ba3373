#include "diffnaps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffnaps {

double jaccard(const Pattern& a, const Pattern& b) {
  const auto fa = a.features();
  const auto fb = b.features();
  std::size_t common = 0;
  for (std::size_t i = 0, j = 0; i < fa.size() && j < fb.size();) {
    if (fa[i] < fb[j]) {
      ++i;
    } else if (fb[j] < fa[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(fa.size() + fb.size() - common);
}

namespace {

double mean_best_match(std::span<const Pattern> from, std::span<const Pattern> to) {
  double total = 0.0;
  for (const auto& p : from) {
    double best = 0.0;
    for (const auto& q : to) best = std::max(best, jaccard(p, q));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

double harmonic(double a, double b) { return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

// Sum and count of the valid log-odds terms of class k.
std::pair<double, std::size_t> log_odds_terms(std::span<const Pattern> patterns,
                                              const LabeledDataset& data, ClassId k) {
  const double in_class = static_cast<double>(data.class_size(k));
  const double out_class = static_cast<double>(data.num_rows() - data.class_size(k));
  double sum = 0.0;
  std::size_t count = 0;
  if (out_class == 0.0) return {0.0, 0};
  for (const auto& p : patterns) {
    const auto supports = class_supports(p, data);
    const std::size_t total = std::accumulate(supports.begin(), supports.end(), std::size_t{0});
    const double p_in = static_cast<double>(supports[k]) / in_class;
    const double p_out = static_cast<double>(total - supports[k]) / out_class;
    if (p_in == 0.0 || p_out == 0.0) continue;
    sum += std::log(p_in / p_out);
    ++count;
  }
  return {sum, count};
}

}  // namespace

SoftScores soft_f1(std::span<const Pattern> discovered, std::span<const Pattern> truth) {
  if (truth.empty()) throw ContractViolation("soft_f1 requires a nonempty ground truth");
  SoftScores s;
  if (discovered.empty()) {
    s.no_discoveries = true;
    return s;
  }
  s.precision = mean_best_match(discovered, truth);
  s.recall = mean_best_match(truth, discovered);
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

MulticlassSoftScores multiclass_soft_f1(const DifferentialPatterns& found,
                                        const GroundTruth& truth) {
  const std::size_t k_count = truth.class_patterns.size();
  if (found.num_classes() > k_count) {
    throw ContractViolation("found patterns have more classes than the ground truth");
  }
  MulticlassSoftScores out;
  for (std::size_t k = 0; k < k_count; ++k) {
    const std::vector<Pattern> discovered =
        k < found.num_classes() ? found.class_patterns(k) : std::vector<Pattern>{};
    out.per_class.push_back(soft_f1(discovered, truth.class_patterns[k]));
    out.precision += out.per_class.back().precision;
    out.recall += out.per_class.back().recall;
    out.f1 += out.per_class.back().f1;
  }
  if (k_count > 0) {
    out.precision /= static_cast<double>(k_count);
    out.recall /= static_cast<double>(k_count);
    out.f1 /= static_cast<double>(k_count);
  }
  return out;
}

DifferentialPatterns filter_spurious(const DifferentialPatterns& patterns,
                                     const LabeledDataset& data) {
  const std::size_t k_count = data.num_classes();
  if (patterns.num_classes() != k_count) {
    throw ContractViolation("pattern class count differs from dataset class count");
  }
  DifferentialPatterns out;
  out.tau_e = patterns.tau_e;
  out.tau_c = patterns.tau_c;
  out.orphans = patterns.orphans;
  out.per_class.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (const auto& np : patterns.per_class[k]) {
      if (np.pattern.max_feature() >= data.num_features()) {
        throw ContractViolation("pattern feature " + std::to_string(np.pattern.max_feature()) +
                                " out of range for dataset with m = " +
                                std::to_string(data.num_features()));
      }
      const auto supports = class_supports(np.pattern, data);
      const std::size_t total = std::accumulate(supports.begin(), supports.end(), std::size_t{0});
      // P(k|p) >= 1/K + 1/10  <=>  10 K supp_k >= (10 + K) supp
      if (total > 0 && 10 * k_count * supports[k] >= (10 + k_count) * total) {
        out.per_class[k].push_back(np);
      }
    }
  }
  return out;
}

std::vector<std::size_t> coverage(std::span<const Pattern> patterns, const BinaryDataset& data) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    const auto row = data.row(i);
    if (std::any_of(patterns.begin(), patterns.end(),
                    [&](const Pattern& p) { return p.contained_in(row); })) {
      rows.push_back(i);
    }
  }
  return rows;
}

CoverageCurve auc_specificity_coverage(const DifferentialPatterns& patterns,
                                       const LabeledDataset& data) {
  const std::size_t k_count = data.num_classes();
  if (patterns.num_classes() != k_count) {
    throw ContractViolation("pattern class count differs from dataset class count");
  }

  struct Scored {
    double specificity;  // P(k|p)
    std::size_t cls;
    std::vector<std::size_t> covered;  // rows of class k containing p
  };
  std::vector<Scored> scored;
  std::vector<double> thresholds{0.0, 1.0};
  for (std::size_t k = 0; k < k_count; ++k) {
    for (const auto& np : patterns.per_class[k]) {
      const auto supports = class_supports(np.pattern, data);
      const std::size_t total = std::accumulate(supports.begin(), supports.end(), std::size_t{0});
      if (total == 0) continue;
      Scored s{static_cast<double>(supports[k]) / static_cast<double>(total), k, {}};
      for (std::size_t r = 0; r < data.num_rows(); ++r) {
        if (data.label(r) == k && np.pattern.contained_in(data.data().row(r))) {
          s.covered.push_back(r);
        }
      }
      thresholds.push_back(s.specificity);
      scored.push_back(std::move(s));
    }
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Sweep t downward, adding patterns as P(k|p) > t starts to hold.
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) { return a.specificity > b.specificity; });
  std::vector<char> covered(data.num_rows(), 0);
  std::vector<std::size_t> covered_per_class(k_count, 0);
  std::vector<double> y(thresholds.size());
  std::size_t next = 0;
  for (std::size_t t = thresholds.size(); t-- > 0;) {
    while (next < scored.size() && scored[next].specificity > thresholds[t]) {
      for (std::size_t r : scored[next].covered) {
        if (!covered[r]) {
          covered[r] = 1;
          ++covered_per_class[scored[next].cls];
        }
      }
      ++next;
    }
    double mean = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      mean += static_cast<double>(covered_per_class[k]) / static_cast<double>(data.class_size(k));
    }
    y[t] = mean / static_cast<double>(k_count);
  }

  CoverageCurve curve;
  curve.points.emplace_back(thresholds[0], y[0]);
  for (std::size_t t = 1; t < thresholds.size(); ++t) {
    curve.points.emplace_back(thresholds[t], y[t - 1]);
    curve.points.emplace_back(thresholds[t], y[t]);
  }
  for (std::size_t p = 1; p < curve.points.size(); ++p) {
    const auto [t0, y0] = curve.points[p - 1];
    const auto [t1, y1] = curve.points[p];
    curve.auc += 0.5 * (t1 - t0) * (y0 + y1);
  }
  return curve;
}

std::optional<double> mean_log_odds(std::span<const Pattern> patterns, const LabeledDataset& data,
                                    ClassId k) {
  if (k >= data.num_classes()) throw ContractViolation("class id out of range");
  const auto [sum, count] = log_odds_terms(patterns, data, k);
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

EvalReport summarize(const DifferentialPatterns& patterns, const LabeledDataset& data,
                     const GroundTruth* truth) {
  const DifferentialPatterns kept = filter_spurious(patterns, data);
  EvalReport report;
  report.pattern_count = kept.total_assigned();
  if (report.pattern_count > 0) {
    double total_length = 0.0;
    for (const auto& c : kept.per_class) {
      for (const auto& np : c) total_length += static_cast<double>(np.pattern.size());
    }
    report.mean_pattern_length = total_length / static_cast<double>(report.pattern_count);
  }
  const CoverageCurve curve = auc_specificity_coverage(kept, data);
  report.auc = curve.auc;
  report.curve = curve.points;

  double pooled_sum = 0.0;
  std::size_t pooled_count = 0;
  for (std::size_t k = 0; k < kept.num_classes(); ++k) {
    const auto class_patterns = kept.class_patterns(k);
    const auto [sum, count] = log_odds_terms(class_patterns, data, static_cast<ClassId>(k));
    report.class_log_odds.push_back(count ? std::optional(sum / static_cast<double>(count))
                                          : std::nullopt);
    pooled_sum += sum;
    pooled_count += count;
  }
  if (pooled_count > 0) report.mean_log_odds = pooled_sum / static_cast<double>(pooled_count);
  if (truth) report.soft = multiclass_soft_f1(kept, *truth);
  return report;
}

}  // namespace diffnaps
