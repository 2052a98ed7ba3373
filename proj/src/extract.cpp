#include "diffnaps/extract.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "diffnaps/parallel.hpp"
#include "diffnaps/train.hpp"

namespace diffnaps {

std::size_t DifferentialPatterns::total_assigned() const noexcept {
  std::size_t total = 0;
  for (const auto& c : per_class) total += c.size();
  return total;
}

std::vector<Pattern> DifferentialPatterns::class_patterns(std::size_t k) const {
  std::vector<Pattern> out;
  out.reserve(per_class[k].size());
  for (const auto& np : per_class[k]) out.push_back(np.pattern);
  return out;
}

namespace {

void check_threshold(double tau, const char* name) {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw ContractViolation(std::string(name) + " must lie in [0,1)");
  }
}

// Thresholded encoder applied to every row: mean reconstruction loss and the
// active neurons per row. Shared by discretized_error and the grid search.
struct EncoderPass {
  double mean_recon = 0.0;
  std::vector<std::vector<std::uint32_t>> active;
};

EncoderPass run_encoder(const ModelParams& params, double tau_e, const LabeledDataset& data) {
  const double alpha = density(data.data());
  const BinaryMatrix bits = deterministic_binarize(params.encoder, tau_e);
  EncoderPass pass;
  pass.active.resize(data.num_rows());
  double total = 0.0;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    const auto x = data.data().row(r);
    const Encoding enc = encode(x, bits, params.bias);
    const Decoding dec = decode(enc.hidden, bits);
    total += recon_loss(x, std::span<const FeatureIndex>(dec.reconstruction), alpha);
    for (std::size_t i = 0; i < enc.hidden.size(); ++i) {
      if (enc.hidden[i]) pass.active[r].push_back(static_cast<std::uint32_t>(i));
    }
  }
  pass.mean_recon = total / static_cast<double>(data.num_rows());
  return pass;
}

double misclassification_rate(const EncoderPass& pass, const Matrix& classifier, double tau_c,
                              const LabeledDataset& data) {
  const std::size_t k_count = classifier.rows();
  std::vector<std::size_t> scores(k_count);
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    std::fill(scores.begin(), scores.end(), 0);
    for (std::uint32_t i : pass.active[r]) {
      for (std::size_t k = 0; k < k_count; ++k) scores[k] += classifier(k, i) > tau_c;
    }
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    wrong += static_cast<ClassId>(best) != data.label(r);
  }
  return static_cast<double>(wrong) / static_cast<double>(data.num_rows());
}

void check_shapes(const ModelParams& params, const LabeledDataset& data) {
  if (params.features() != data.num_features() || params.classes() != data.num_classes()) {
    throw ContractViolation("model shape (m=" + std::to_string(params.features()) +
                            ", K=" + std::to_string(params.classes()) +
                            ") does not match dataset (m=" + std::to_string(data.num_features()) +
                            ", K=" + std::to_string(data.num_classes()) + ")");
  }
}

}  // namespace

std::vector<NeuronPattern> extract_patterns(const Matrix& encoder, double tau_e) {
  check_threshold(tau_e, "tau_e");
  std::vector<NeuronPattern> out;
  for (std::size_t i = 0; i < encoder.rows(); ++i) {
    std::vector<FeatureIndex> features;
    const auto row = encoder.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > tau_e) features.push_back(static_cast<FeatureIndex>(j));
    }
    if (!features.empty()) out.push_back({i, Pattern(std::move(features))});
  }
  return out;
}

DifferentialPatterns assign_classes(const std::vector<NeuronPattern>& patterns,
                                    const Matrix& classifier, double tau_c) {
  check_threshold(tau_c, "tau_c");
  DifferentialPatterns out;
  out.tau_c = tau_c;
  out.per_class.resize(classifier.rows());
  for (std::size_t k = 0; k < classifier.rows(); ++k) {
    // feature set -> index into per_class[k]
    std::map<Pattern, std::size_t> seen;
    auto& bucket = out.per_class[k];
    for (const auto& np : patterns) {
      if (np.neuron >= classifier.cols()) throw ContractViolation("neuron id out of range");
      const double weight = classifier(k, np.neuron);
      if (!(weight > tau_c)) continue;
      auto [it, inserted] = seen.emplace(np.pattern, bucket.size());
      if (inserted) {
        bucket.push_back(np);
      } else if (weight > classifier(k, bucket[it->second].neuron)) {
        bucket[it->second] = np;
      }
    }
  }
  for (const auto& np : patterns) {
    bool assigned = false;
    for (std::size_t k = 0; k < classifier.rows(); ++k) assigned |= classifier(k, np.neuron) > tau_c;
    if (!assigned) out.orphans.push_back(np);
  }
  return out;
}

double discretized_error(const ModelParams& params, double tau_e, double tau_c,
                         const LabeledDataset& data, double lambda_c) {
  check_threshold(tau_e, "tau_e");
  check_threshold(tau_c, "tau_c");
  check_shapes(params, data);
  const EncoderPass pass = run_encoder(params, tau_e, data);
  return pass.mean_recon +
         lambda_c * misclassification_rate(pass, params.classifier, tau_c, data);
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int t = 1; t <= 19; ++t) grid.push_back(t * 0.05);
  return grid;
}

ThresholdSelection grid_search_thresholds(const ModelParams& params, const LabeledDataset& data,
                                          std::span<const double> grid_e,
                                          std::span<const double> grid_c, double lambda_c,
                                          unsigned threads) {
  if (grid_e.empty() || grid_c.empty()) throw ContractViolation("threshold grids must be nonempty");
  for (double t : grid_e) check_threshold(t, "tau_e");
  for (double t : grid_c) check_threshold(t, "tau_c");
  check_shapes(params, data);

  // errors[a * |grid_c| + b] for (grid_e[a], grid_c[b])
  std::vector<double> errors(grid_e.size() * grid_c.size());
  parallel_for(grid_e.size(), threads, [&](std::size_t a) {
    const EncoderPass pass = run_encoder(params, grid_e[a], data);
    for (std::size_t b = 0; b < grid_c.size(); ++b) {
      errors[a * grid_c.size() + b] =
          pass.mean_recon +
          lambda_c * misclassification_rate(pass, params.classifier, grid_c[b], data);
    }
  });

  ThresholdSelection best;
  best.error = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t a = 0; a < grid_e.size(); ++a) {
    for (std::size_t b = 0; b < grid_c.size(); ++b) {
      const double e = errors[a * grid_c.size() + b];
      const bool better =
          !found || e < best.error ||
          (e == best.error && (grid_e[a] < best.tau_e ||
                               (grid_e[a] == best.tau_e && grid_c[b] < best.tau_c)));
      if (better) {
        best.error = e;
        best.tau_e = grid_e[a];
        best.tau_c = grid_c[b];
        found = true;
      }
    }
  }
  best.patterns = assign_classes(extract_patterns(params.encoder, best.tau_e), params.classifier,
                                 best.tau_c);
  best.patterns.tau_e = best.tau_e;
  return best;
}

}  // namespace diffnaps
