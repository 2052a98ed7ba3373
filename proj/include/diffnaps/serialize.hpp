#pragma once

#include <string>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "diffnaps/eval.hpp"
#include "diffnaps/extract.hpp"
#include "diffnaps/synth.hpp"
#include "diffnaps/train.hpp"

namespace diffnaps {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Patterns: {"0": [[j...], ...], "1": [...], "neurons": {"0": [i...], ...},
//            "thresholds": {"tau_e": x, "tau_c": y}, "orphans": [[j...], ...]}
Json patterns_to_json(const DifferentialPatterns& patterns);
/// Accepts files without "neurons"; neuron ids then default to list position.
DifferentialPatterns patterns_from_json(const Json& json);
/// One "k: j1 j2 j3" line per assigned pattern, classes ascending.
std::string patterns_to_text(const DifferentialPatterns& patterns);

Json spec_to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const Json& json);

// Ground truth: {"class_patterns": [[[j...], ...], ...], "shared_patterns": [[j...], ...],
//                "spec": {...}}
Json truth_to_json(const GroundTruth& truth, const SyntheticSpec& spec);
GroundTruth truth_from_json(const Json& json);

Json config_to_json(const TrainConfig& config);

/// Header: epoch,recon_loss,class_loss,r_s,r_b,kappa,lambda,seconds
std::string train_report_csv(const TrainReport& report);
Json train_report_json(const TrainReport& report);

Json eval_report_json(const EvalReport& report);
/// Header: threshold,coverage
std::string curve_csv(const EvalReport& report);

}  // namespace diffnaps
