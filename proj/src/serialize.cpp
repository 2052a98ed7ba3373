#include "diffnaps/serialize.hpp"

#include <array>
#include <charconv>

namespace diffnaps {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), ptr};
}

namespace {

Json pattern_json(const Pattern& p) { return Json(std::vector<FeatureIndex>(p.features().begin(), p.features().end())); }

Pattern pattern_from(const Json& j) { return Pattern(j.get<std::vector<FeatureIndex>>()); }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json patterns_to_json(const DifferentialPatterns& patterns) {
  Json out = Json::object();
  Json neurons = Json::object();
  for (std::size_t k = 0; k < patterns.num_classes(); ++k) {
    Json list = Json::array();
    Json ids = Json::array();
    for (const auto& np : patterns.per_class[k]) {
      list.push_back(pattern_json(np.pattern));
      ids.push_back(np.neuron);
    }
    out[std::to_string(k)] = std::move(list);
    neurons[std::to_string(k)] = std::move(ids);
  }
  out["neurons"] = std::move(neurons);
  out["thresholds"] = {{"tau_e", patterns.tau_e}, {"tau_c", patterns.tau_c}};
  Json orphans = Json::array();
  Json orphan_ids = Json::array();
  for (const auto& np : patterns.orphans) {
    orphans.push_back(pattern_json(np.pattern));
    orphan_ids.push_back(np.neuron);
  }
  out["orphans"] = std::move(orphans);
  out["orphan_neurons"] = std::move(orphan_ids);
  return out;
}

DifferentialPatterns patterns_from_json(const Json& json) {
  if (!json.is_object()) throw ParseError("patterns file: expected a JSON object");
  DifferentialPatterns out;
  std::size_t k_count = 0;
  while (json.contains(std::to_string(k_count))) ++k_count;
  out.per_class.resize(k_count);
  const Json* neurons = json.contains("neurons") ? &json["neurons"] : nullptr;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Json& list = json[std::to_string(k)];
    for (std::size_t t = 0; t < list.size(); ++t) {
      std::size_t neuron = t;
      if (neurons && neurons->contains(std::to_string(k))) {
        neuron = (*neurons)[std::to_string(k)].at(t).get<std::size_t>();
      }
      out.per_class[k].push_back({neuron, pattern_from(list[t])});
    }
  }
  if (json.contains("thresholds")) {
    out.tau_e = json["thresholds"].value("tau_e", 0.0);
    out.tau_c = json["thresholds"].value("tau_c", 0.0);
  }
  if (json.contains("orphans")) {
    const Json& list = json["orphans"];
    for (std::size_t t = 0; t < list.size(); ++t) {
      std::size_t neuron = t;
      if (json.contains("orphan_neurons")) neuron = json["orphan_neurons"].at(t).get<std::size_t>();
      out.orphans.push_back({neuron, pattern_from(list[t])});
    }
  }
  return out;
}

std::string patterns_to_text(const DifferentialPatterns& patterns) {
  std::string out;
  for (std::size_t k = 0; k < patterns.num_classes(); ++k) {
    for (const auto& np : patterns.per_class[k]) {
      out += std::to_string(k) + ":";
      for (FeatureIndex j : np.pattern.features()) out += " " + std::to_string(j);
      out += "\n";
    }
  }
  return out;
}

Json spec_to_json(const SyntheticSpec& s) {
  return {{"n_per_class", s.n_per_class},
          {"m", s.m},
          {"classes", s.classes},
          {"patterns_per_class", s.patterns_per_class},
          {"shared_patterns", s.shared_patterns},
          {"class_len_lo", s.class_len_lo},
          {"class_len_hi", s.class_len_hi},
          {"shared_len_frac_lo", s.shared_len_frac_lo},
          {"shared_len_frac_hi", s.shared_len_frac_hi},
          {"planted_class_per_row", s.planted_class_per_row},
          {"planted_shared_per_row", s.planted_shared_per_row},
          {"additive_flips", s.additive_flips},
          {"destructive_prob", s.destructive_prob},
          {"label_fidelity", s.label_fidelity},
          {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const Json& j) {
  SyntheticSpec s;
  s.n_per_class = j.value("n_per_class", s.n_per_class);
  s.m = j.value("m", s.m);
  s.classes = j.value("classes", s.classes);
  s.patterns_per_class = j.value("patterns_per_class", s.patterns_per_class);
  s.shared_patterns = j.value("shared_patterns", s.shared_patterns);
  s.class_len_lo = j.value("class_len_lo", s.class_len_lo);
  s.class_len_hi = j.value("class_len_hi", s.class_len_hi);
  s.shared_len_frac_lo = j.value("shared_len_frac_lo", s.shared_len_frac_lo);
  s.shared_len_frac_hi = j.value("shared_len_frac_hi", s.shared_len_frac_hi);
  s.planted_class_per_row = j.value("planted_class_per_row", s.planted_class_per_row);
  s.planted_shared_per_row = j.value("planted_shared_per_row", s.planted_shared_per_row);
  s.additive_flips = j.value("additive_flips", s.additive_flips);
  s.destructive_prob = j.value("destructive_prob", s.destructive_prob);
  s.label_fidelity = j.value("label_fidelity", s.label_fidelity);
  s.seed = j.value("seed", s.seed);
  return s;
}

Json truth_to_json(const GroundTruth& truth, const SyntheticSpec& spec) {
  Json classes = Json::array();
  for (const auto& list : truth.class_patterns) {
    Json c = Json::array();
    for (const auto& p : list) c.push_back(pattern_json(p));
    classes.push_back(std::move(c));
  }
  Json shared = Json::array();
  for (const auto& p : truth.shared_patterns) shared.push_back(pattern_json(p));
  return {{"class_patterns", std::move(classes)},
          {"shared_patterns", std::move(shared)},
          {"spec", spec_to_json(spec)}};
}

GroundTruth truth_from_json(const Json& json) {
  if (!json.is_object() || !json.contains("class_patterns")) {
    throw ParseError("ground-truth file: missing \"class_patterns\"");
  }
  GroundTruth truth;
  for (const auto& list : json["class_patterns"]) {
    auto& out = truth.class_patterns.emplace_back();
    for (const auto& p : list) out.push_back(pattern_from(p));
  }
  if (json.contains("shared_patterns")) {
    for (const auto& p : json["shared_patterns"]) truth.shared_patterns.push_back(pattern_from(p));
  }
  return truth;
}

Json config_to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},
          {"lambda_c", c.lambda_c},
          {"kappa0", c.kappa0},
          {"lambda0", c.lambda0},
          {"sched_gamma", c.sched_gamma},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"init_lo", c.init_lo},
          {"init_hi", c.init_hi},
          {"optimizer", to_string(c.optimizer)},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps}};
}

std::string train_report_csv(const TrainReport& report) {
  std::string out = "epoch,recon_loss,class_loss,r_s,r_b,kappa,lambda,seconds\n";
  for (const auto& e : report.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.recon_loss) + "," +
           format_double(e.class_loss) + "," + format_double(e.pattern_length) + "," +
           format_double(e.w_shape) + "," + format_double(e.kappa) + "," +
           format_double(e.lambda) + "," + format_double(e.seconds) + "\n";
  }
  return out;
}

Json train_report_json(const TrainReport& report) {
  Json epochs = Json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"recon_loss", e.recon_loss},
                      {"class_loss", e.class_loss},
                      {"r_s", e.pattern_length},
                      {"r_b", e.w_shape},
                      {"kappa", e.kappa},
                      {"lambda", e.lambda},
                      {"clamped_logs", e.clamped_logs},
                      {"seconds", e.seconds}});
  }
  return {{"epochs", std::move(epochs)}};
}

Json eval_report_json(const EvalReport& r) {
  Json out = {{"pattern_count", r.pattern_count},
              {"mean_pattern_length", optional_json(r.mean_pattern_length)},
              {"auc", r.auc},
              {"mean_log_odds", optional_json(r.mean_log_odds)}};
  Json per_class = Json::array();
  for (const auto& v : r.class_log_odds) per_class.push_back(optional_json(v));
  out["class_log_odds"] = std::move(per_class);
  if (r.soft) {
    Json classes = Json::array();
    for (const auto& s : r.soft->per_class) {
      classes.push_back({{"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"no_discoveries", s.no_discoveries}});
    }
    out["soft_precision"] = r.soft->precision;
    out["soft_recall"] = r.soft->recall;
    out["soft_f1"] = r.soft->f1;
    out["soft_per_class"] = std::move(classes);
  }
  Json curve = Json::array();
  for (const auto& [t, y] : r.curve) curve.push_back({t, y});
  out["curve"] = std::move(curve);
  return out;
}

std::string curve_csv(const EvalReport& report) {
  std::string out = "threshold,coverage\n";
  for (const auto& [t, y] : report.curve) out += format_double(t) + "," + format_double(y) + "\n";
  return out;
}

}  // namespace diffnaps
