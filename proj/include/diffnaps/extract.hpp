#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diffnaps/dataset.hpp"
#include "diffnaps/model.hpp"

namespace diffnaps {

struct NeuronPattern {
  std::size_t neuron = 0;
  Pattern pattern;

  friend bool operator==(const NeuronPattern&, const NeuronPattern&) = default;
};

/// Per-class pattern lists read off a trained model. A neuron may sit under
/// several classes; neurons above tau_e but connected to no class are orphans.
struct DifferentialPatterns {
  std::vector<std::vector<NeuronPattern>> per_class;
  std::vector<NeuronPattern> orphans;
  double tau_e = 0.0;
  double tau_c = 0.0;

  std::size_t num_classes() const noexcept { return per_class.size(); }
  std::size_t total_assigned() const noexcept;
  std::vector<Pattern> class_patterns(std::size_t k) const;

  friend bool operator==(const DifferentialPatterns&, const DifferentialPatterns&) = default;
};

/// p_i = { j : W_E[i,j] > tau_e }; neurons with empty p_i are skipped.
std::vector<NeuronPattern> extract_patterns(const Matrix& encoder, double tau_e);

/// Neuron i goes to every class k with W_C[k,i] > tau_c. Identical feature sets
/// within a class keep only the neuron with the largest W_C[k,i] (lowest id on ties).
DifferentialPatterns assign_classes(const std::vector<NeuronPattern>& patterns,
                                    const Matrix& classifier, double tau_c);

/// Mean reconstruction loss plus lambda_c times the misclassification rate of
/// the thresholded network. The discrete classifier scores class k by the number
/// of active neurons with W_C[k,i] > tau_c; ties go to the lowest class id.
double discretized_error(const ModelParams& params, double tau_e, double tau_c,
                         const LabeledDataset& data, double lambda_c);

/// 0.05, 0.10, ..., 0.95.
std::vector<double> default_threshold_grid();

struct ThresholdSelection {
  double tau_e = 0.0;
  double tau_c = 0.0;
  double error = 0.0;
  DifferentialPatterns patterns;
};

/// Exhaustive search over grid_e x grid_c for the lowest discretized_error.
/// Ties prefer smaller tau_e, then smaller tau_c.
ThresholdSelection grid_search_thresholds(const ModelParams& params, const LabeledDataset& data,
                                          std::span<const double> grid_e,
                                          std::span<const double> grid_c, double lambda_c,
                                          unsigned threads = 1);

}  // namespace diffnaps
