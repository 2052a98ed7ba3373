#include "diffnaps/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "diffnaps/io.hpp"

namespace diffnaps {

BinaryDataset::BinaryDataset(std::size_t num_features,
                             const std::vector<std::vector<FeatureIndex>>& rows)
    : num_features_(num_features) {
  offsets_.reserve(rows.size() + 1);
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  indices_.reserve(total);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] >= num_features) {
        throw ContractViolation("row " + std::to_string(i) + ": feature " +
                                std::to_string(r[j]) + " out of range [0, " +
                                std::to_string(num_features) + ")");
      }
      if (j > 0 && r[j] <= r[j - 1]) {
        throw ContractViolation("row " + std::to_string(i) +
                                ": indices must be strictly increasing");
      }
    }
    indices_.insert(indices_.end(), r.begin(), r.end());
    offsets_.push_back(indices_.size());
  }
}

LabeledDataset::LabeledDataset(BinaryDataset data, std::vector<ClassId> labels,
                               std::size_t num_classes)
    : data_(std::move(data)), labels_(std::move(labels)), class_sizes_(num_classes, 0) {
  if (labels_.size() != data_.num_rows()) {
    throw ContractViolation("label count " + std::to_string(labels_.size()) +
                            " differs from row count " + std::to_string(data_.num_rows()));
  }
  for (ClassId y : labels_) {
    if (y >= num_classes) {
      throw ContractViolation("class id " + std::to_string(y) + " out of range [0, " +
                              std::to_string(num_classes) + ")");
    }
    ++class_sizes_[y];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (class_sizes_[k] == 0) {
      throw ContractViolation("class " + std::to_string(k) + " has no rows");
    }
  }
}

Pattern::Pattern(std::vector<FeatureIndex> features) : features_(std::move(features)) {
  if (features_.empty()) throw ContractViolation("pattern must be nonempty");
  std::sort(features_.begin(), features_.end());
  features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
}

bool Pattern::contained_in(std::span<const FeatureIndex> row) const noexcept {
  return std::includes(row.begin(), row.end(), features_.begin(), features_.end());
}

namespace {

// Splits text into lines; a trailing newline does not open a new row.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

template <class T>
std::vector<T> parse_integers(std::string_view line, std::size_t line_no) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    const std::string_view token = line.substr(pos, end - pos);
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw ParseError("non-integer token '" + std::string(token) + "'", line_no);
    }
    out.push_back(value);
    pos = end;
  }
  return out;
}

}  // namespace

BinaryDataset parse_sparse_rows(std::string_view text, std::optional<std::size_t> num_features) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("zero rows");
  std::vector<std::vector<FeatureIndex>> rows;
  rows.reserve(lines.size());
  std::size_t max_plus_one = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto row = parse_integers<FeatureIndex>(lines[i], i + 1);
    std::sort(row.begin(), row.end());
    if (std::adjacent_find(row.begin(), row.end()) != row.end()) {
      throw ParseError("duplicate feature index", i + 1);
    }
    if (!row.empty()) {
      if (num_features && row.back() >= *num_features) {
        throw ParseError("feature index " + std::to_string(row.back()) + " >= declared m " +
                             std::to_string(*num_features),
                         i + 1);
      }
      max_plus_one = std::max<std::size_t>(max_plus_one, std::size_t{row.back()} + 1);
    }
    rows.push_back(std::move(row));
  }
  return BinaryDataset(num_features.value_or(max_plus_one), rows);
}

std::vector<ClassId> parse_labels(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<ClassId> labels;
  labels.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto values = parse_integers<ClassId>(lines[i], i + 1);
    if (values.size() != 1) throw ParseError("expected exactly one class id", i + 1);
    labels.push_back(values.front());
  }
  return labels;
}

LabeledDataset make_labeled(BinaryDataset data, const std::vector<ClassId>& labels) {
  if (labels.size() != data.num_rows()) {
    // Report the first line that exists in one file but not the other.
    throw ParseError("row-count mismatch", std::min(labels.size(), data.num_rows()) + 1);
  }
  const ClassId max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  return LabeledDataset(std::move(data), labels, std::size_t{max_label} + 1);
}

LabeledDataset load_sparse(const std::filesystem::path& data_path,
                           const std::filesystem::path& labels_path,
                           std::optional<std::size_t> num_features) {
  auto data = parse_sparse_rows(read_file(data_path), num_features);
  return make_labeled(std::move(data), parse_labels(read_file(labels_path)));
}

std::string format_sparse_rows(const BinaryDataset& data) {
  std::string out;
  out.reserve(data.num_nonzeros() * 6 + data.num_rows());
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    bool first = true;
    for (FeatureIndex j : data.row(i)) {
      if (!first) out.push_back(' ');
      out += std::to_string(j);
      first = false;
    }
    out.push_back('\n');
  }
  return out;
}

std::string format_labels(std::span<const ClassId> labels) {
  std::string out;
  for (ClassId y : labels) {
    out += std::to_string(y);
    out.push_back('\n');
  }
  return out;
}

void save_sparse(const LabeledDataset& dataset, const std::filesystem::path& data_path,
                 const std::filesystem::path& labels_path) {
  write_file_atomic(data_path, format_sparse_rows(dataset.data()));
  write_file_atomic(labels_path, format_labels(dataset.labels()));
}

std::size_t support(const Pattern& p, const BinaryDataset& data) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.num_rows(); ++i) count += p.contained_in(data.row(i));
  return count;
}

std::size_t support_in_class(const Pattern& p, const LabeledDataset& data, ClassId k) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    if (data.label(i) == k && p.contained_in(data.data().row(i))) ++count;
  }
  return count;
}

std::vector<std::size_t> class_supports(const Pattern& p, const LabeledDataset& data) {
  std::vector<std::size_t> counts(data.num_classes(), 0);
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    if (p.contained_in(data.data().row(i))) ++counts[data.label(i)];
  }
  return counts;
}

double prob_pattern_given_class(const Pattern& p, const LabeledDataset& data, ClassId k) {
  if (k >= data.num_classes()) throw ContractViolation("class id out of range");
  return static_cast<double>(support_in_class(p, data, k)) /
         static_cast<double>(data.class_size(k));
}

double prob_class_given_pattern(const Pattern& p, const LabeledDataset& data, ClassId k) {
  if (k >= data.num_classes()) throw ContractViolation("class id out of range");
  const auto counts = class_supports(p, data);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw UndefinedSupport("P(k|p) undefined: pattern has zero support");
  return static_cast<double>(counts[k]) / static_cast<double>(total);
}

bool is_differential(const Pattern& p, const LabeledDataset& data, ClassId k) {
  if (k >= data.num_classes()) throw ContractViolation("class id out of range");
  const auto counts = class_supports(p, data);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw UndefinedSupport("is_differential undefined: pattern has zero support");
  for (ClassId other = 0; other < counts.size(); ++other) {
    if (other == k) continue;
    // P(k'|p) shares the denominator supp(p), so compare class supports directly.
    if (counts[other] >= counts[k]) return false;
    // P(p|k') = supp_k'/n_k'; cross-multiply to stay in integers.
    if (counts[other] * data.class_size(k) >= counts[k] * data.class_size(other)) return false;
  }
  return true;
}

double density(const BinaryDataset& data) {
  const std::size_t cells = data.num_rows() * data.num_features();
  if (cells == 0) throw ContractViolation("density of an empty dataset");
  return static_cast<double>(data.num_nonzeros()) / static_cast<double>(cells);
}

}  // namespace diffnaps
