#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "diffnaps/dataset.hpp"
#include "diffnaps/extract.hpp"
#include "diffnaps/synth.hpp"

namespace diffnaps {

/// |a ∩ b| / |a ∪ b|.
double jaccard(const Pattern& a, const Pattern& b);

struct SoftScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool no_discoveries = false;  // discovered set was empty; all scores are 0
};

/// Best-match Jaccard precision/recall and their harmonic mean. An empty
/// discovered set scores (0,0,0); an empty ground truth is a ContractViolation.
SoftScores soft_f1(std::span<const Pattern> discovered, std::span<const Pattern> truth);

struct MulticlassSoftScores {
  std::vector<SoftScores> per_class;
  double precision = 0.0;  // unweighted means over classes
  double recall = 0.0;
  double f1 = 0.0;
};

MulticlassSoftScores multiclass_soft_f1(const DifferentialPatterns& found,
                                        const GroundTruth& truth);

/// Keeps p under class k iff supp(p) > 0 and P(k|p) >= 1/K + 0.1. Orphans pass through.
DifferentialPatterns filter_spurious(const DifferentialPatterns& patterns,
                                     const LabeledDataset& data);

/// Sorted ids of rows containing at least one pattern.
std::vector<std::size_t> coverage(std::span<const Pattern> patterns, const BinaryDataset& data);

struct CoverageCurve {
  /// Staircase of (threshold, mean class coverage); both the value before and
  /// after each jump are listed so trapezoidal integration is exact.
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
};

/// Mean per-class coverage of patterns with P(k|p) > t, swept over t in [0,1].
CoverageCurve auc_specificity_coverage(const DifferentialPatterns& patterns,
                                       const LabeledDataset& data);

/// Mean of ln(P(p|k) / P(p|not k)) over patterns where both probabilities are
/// positive; nullopt when no term qualifies.
std::optional<double> mean_log_odds(std::span<const Pattern> patterns, const LabeledDataset& data,
                                    ClassId k);

struct EvalReport {
  std::size_t pattern_count = 0;
  std::optional<double> mean_pattern_length;
  double auc = 0.0;
  std::vector<std::pair<double, double>> curve;
  std::optional<double> mean_log_odds;  // pooled over all classes' terms
  std::vector<std::optional<double>> class_log_odds;
  std::optional<MulticlassSoftScores> soft;  // present only with ground truth
};

/// Filters spurious patterns, then computes every report field on what remains.
EvalReport summarize(const DifferentialPatterns& patterns, const LabeledDataset& data,
                     const GroundTruth* truth = nullptr);

}  // namespace diffnaps
