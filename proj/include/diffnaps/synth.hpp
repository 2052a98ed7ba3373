#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffnaps/dataset.hpp"

namespace diffnaps {

struct SyntheticSpec {
  std::size_t n_per_class = 1000;
  std::size_t m = 1000;
  std::size_t classes = 2;
  std::size_t patterns_per_class = 10;
  std::size_t shared_patterns = 20;
  std::size_t class_len_lo = 5;
  std::size_t class_len_hi = 15;
  double shared_len_frac_lo = 0.01;
  double shared_len_frac_hi = 0.025;
  std::size_t planted_class_per_row = 3;
  std::size_t planted_shared_per_row = 2;
  std::size_t additive_flips = 10;
  double destructive_prob = 0.025;
  double label_fidelity = 0.9;
  std::uint64_t seed = 0;

  std::size_t shared_len_lo() const;  // ceil(frac_lo * m)
  std::size_t shared_len_hi() const;  // ceil(frac_hi * m)

  /// Throws ContractViolation describing the first infeasible setting.
  void validate() const;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct GroundTruth {
  std::vector<std::vector<Pattern>> class_patterns;
  std::vector<Pattern> shared_patterns;
};

struct SyntheticData {
  LabeledDataset dataset;
  GroundTruth truth;
  /// Class whose patterns were planted in each row (before label noise).
  std::vector<ClassId> generating_class;
};

/// Rows are ordered by generating class. Each row draws its noise from its own
/// stream derived from (seed, row index), so output is independent of `threads`.
SyntheticData generate(const SyntheticSpec& spec, unsigned threads = 1);

/// Five patterns per class and no shared patterns, for m < 1000.
SyntheticSpec low_dim_variant(const SyntheticSpec& spec);

}  // namespace diffnaps
