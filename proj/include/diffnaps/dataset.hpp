#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "diffnaps/common.hpp"

namespace diffnaps {

/// Sparse binary matrix: each row is the sorted set of its active feature indices.
/// Immutable after construction.
class BinaryDataset {
 public:
  BinaryDataset() = default;

  /// Rows must hold strictly increasing indices below `num_features`;
  /// throws ContractViolation otherwise.
  BinaryDataset(std::size_t num_features, const std::vector<std::vector<FeatureIndex>>& rows);

  std::size_t num_rows() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_features() const noexcept { return num_features_; }
  std::size_t num_nonzeros() const noexcept { return indices_.size(); }

  std::span<const FeatureIndex> row(std::size_t i) const noexcept {
    return {indices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  friend bool operator==(const BinaryDataset&, const BinaryDataset&) = default;

 private:
  std::size_t num_features_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<FeatureIndex> indices_;
};

/// Binary data with one class id per row. Every class in [0, K) has at least one row.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(BinaryDataset data, std::vector<ClassId> labels, std::size_t num_classes);

  const BinaryDataset& data() const noexcept { return data_; }
  std::span<const ClassId> labels() const noexcept { return labels_; }
  ClassId label(std::size_t row) const noexcept { return labels_[row]; }
  std::size_t num_rows() const noexcept { return data_.num_rows(); }
  std::size_t num_features() const noexcept { return data_.num_features(); }
  std::size_t num_classes() const noexcept { return class_sizes_.size(); }
  std::size_t class_size(ClassId k) const noexcept { return class_sizes_[k]; }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  BinaryDataset data_;
  std::vector<ClassId> labels_;
  std::vector<std::size_t> class_sizes_;
};

/// A conjunction of features: nonempty, sorted, duplicate-free.
class Pattern {
 public:
  Pattern() = default;
  /// Sorts and deduplicates; throws ContractViolation when empty.
  explicit Pattern(std::vector<FeatureIndex> features);

  std::span<const FeatureIndex> features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }
  FeatureIndex max_feature() const noexcept { return features_.back(); }

  /// True iff every feature of the pattern is active in `row` (both sorted).
  bool contained_in(std::span<const FeatureIndex> row) const noexcept;

  friend bool operator==(const Pattern&, const Pattern&) = default;
  friend auto operator<=>(const Pattern&, const Pattern&) = default;

 private:
  std::vector<FeatureIndex> features_;
};

/// Reads the sparse text format: one line per row with space-separated 0-based
/// indices (empty line = all-zero row), plus one class id per line in the label
/// file. `num_features` overrides the inferred 1 + max index.
LabeledDataset load_sparse(const std::filesystem::path& data_path,
                           const std::filesystem::path& labels_path,
                           std::optional<std::size_t> num_features = std::nullopt);

/// Parsers behind load_sparse, exposed for in-memory use.
BinaryDataset parse_sparse_rows(std::string_view text,
                                std::optional<std::size_t> num_features = std::nullopt);
std::vector<ClassId> parse_labels(std::string_view text);
LabeledDataset make_labeled(BinaryDataset data, const std::vector<ClassId>& labels);

std::string format_sparse_rows(const BinaryDataset& data);
std::string format_labels(std::span<const ClassId> labels);
void save_sparse(const LabeledDataset& dataset, const std::filesystem::path& data_path,
                 const std::filesystem::path& labels_path);

std::size_t support(const Pattern& p, const BinaryDataset& data);
std::size_t support_in_class(const Pattern& p, const LabeledDataset& data, ClassId k);
/// supp_k(p) for every class in one scan.
std::vector<std::size_t> class_supports(const Pattern& p, const LabeledDataset& data);

/// supp_k(p) / n_k.
double prob_pattern_given_class(const Pattern& p, const LabeledDataset& data, ClassId k);
/// supp_k(p) / supp(p); throws UndefinedSupport when supp(p) == 0.
double prob_class_given_pattern(const Pattern& p, const LabeledDataset& data, ClassId k);

/// k is the unique argmax of both P(p|k') and P(k'|p). Ties count as not
/// differential. Throws UndefinedSupport when supp(p) == 0.
bool is_differential(const Pattern& p, const LabeledDataset& data, ClassId k);

/// Fraction of active cells; throws ContractViolation when n*m == 0.
double density(const BinaryDataset& data);

}  // namespace diffnaps
