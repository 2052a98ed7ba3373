#include "cli.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>

#include "CLI11.hpp"
#include "diffnaps/eval.hpp"
#include "diffnaps/extract.hpp"
#include "diffnaps/io.hpp"
#include "diffnaps/parallel.hpp"
#include "diffnaps/rng.hpp"
#include "diffnaps/serialize.hpp"

#ifndef DIFFNAPS_VERSION
#define DIFFNAPS_VERSION "0.0.0"
#endif

namespace diffnaps::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out = ".";
  unsigned threads = 1;
  std::string config;
};

struct DataArgs {
  std::string data;
  std::string labels;
  std::size_t declared_features = 0;  // 0 = infer from the data

  LabeledDataset load() const {
    std::optional<std::size_t> m;
    if (declared_features > 0) m = declared_features;
    return load_sparse(data, labels, m);
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(std::string_view token) {
  const std::string t = trim(token);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ContractViolation("not a number: '" + t + "'");
  }
  return v;
}

std::vector<double> parse_list(std::string_view text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    values.push_back(parse_double(text.substr(start, comma - start)));
    start = comma + 1;
  }
  return values;
}

void write_json(const fs::path& path, const Json& json) {
  write_file_atomic(path, json.dump(2) + "\n");
}

// Fields are ordered so that everything except "timings" is reproducible.
void write_manifest(const fs::path& dir, const std::string& command, const Globals& g,
                    Json config, const std::vector<fs::path>& inputs,
                    const std::vector<std::string>& outputs, Json extra, double seconds) {
  Json hashes = Json::object();
  for (const auto& p : inputs) hashes[p.string()] = sha256_file(p);
  Json manifest = {{"command", command},
                   {"version", DIFFNAPS_VERSION},
                   {"seed", g.seed},
                   {"threads", g.threads},
                   {"config", std::move(config)},
                   {"inputs", std::move(hashes)},
                   {"outputs", outputs}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  manifest["timings"] = {{"total_seconds", seconds}};
  write_json(dir / (command + "_manifest.json"), manifest);
}

void add_spec_options(CLI::App* app, SyntheticSpec& s) {
  app->add_option("--n-per-class", s.n_per_class, "Rows per class")->capture_default_str();
  app->add_option("--m", s.m, "Feature count")->capture_default_str();
  app->add_option("--classes", s.classes, "Class count K")->capture_default_str();
  app->add_option("--patterns-per-class", s.patterns_per_class)->capture_default_str();
  app->add_option("--shared-patterns", s.shared_patterns)->capture_default_str();
  app->add_option("--class-len-lo", s.class_len_lo)->capture_default_str();
  app->add_option("--class-len-hi", s.class_len_hi)->capture_default_str();
  app->add_option("--shared-len-frac-lo", s.shared_len_frac_lo)->capture_default_str();
  app->add_option("--shared-len-frac-hi", s.shared_len_frac_hi)->capture_default_str();
  app->add_option("--planted-class-per-row", s.planted_class_per_row)->capture_default_str();
  app->add_option("--planted-shared-per-row", s.planted_shared_per_row)->capture_default_str();
  app->add_option("--additive-flips", s.additive_flips, "Zeros flipped to 1 per row")
      ->capture_default_str();
  app->add_option("--destructive-prob", s.destructive_prob,
                  "Probability of deleting each planted 1")
      ->capture_default_str();
  app->add_option("--label-fidelity", s.label_fidelity,
                  "Probability a row keeps its generating class")
      ->capture_default_str();
}

void add_train_options(CLI::App* app, TrainConfig& c, std::string& optimizer) {
  app->add_option("--hidden", c.hidden, "Pattern-layer width h")->capture_default_str();
  app->add_option("--lambda-c", c.lambda_c, "Classification loss weight")->capture_default_str();
  app->add_option("--kappa0", c.kappa0)->capture_default_str();
  app->add_option("--lambda0", c.lambda0)->capture_default_str();
  app->add_option("--sched-gamma", c.sched_gamma)->capture_default_str();
  app->add_option("--lr", c.lr)->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--init-lo", c.init_lo)->capture_default_str();
  app->add_option("--init-hi", c.init_hi)->capture_default_str();
  app->add_option("--optimizer", optimizer, "sgd or adam")->capture_default_str();
  app->add_option("--beta1", c.beta1)->capture_default_str();
  app->add_option("--beta2", c.beta2)->capture_default_str();
  app->add_option("--adam-eps", c.adam_eps)->capture_default_str();
}

void add_data_options(CLI::App* app, DataArgs& d) {
  app->add_option("--data", d.data, "Sparse data file")->required();
  app->add_option("--labels", d.labels, "Label file")->required();
  app->add_option("--m,--features", d.declared_features,
                  "Declared feature count; indices must lie below it (default: inferred)");
}

void add_grid_options(CLI::App* app, std::string& grid_e, std::string& grid_c) {
  app->add_option("--grid-e", grid_e, "Comma-separated encoder thresholds (default 0.05..0.95)");
  app->add_option("--grid-c", grid_c, "Comma-separated classifier thresholds (default 0.05..0.95)");
}

std::vector<double> grid_or_default(const std::string& text) {
  return text.empty() ? default_threshold_grid() : parse_list(text);
}

// Places config entries ahead of the command-line flags so the flags win.
std::vector<std::string> inject_config(const std::vector<std::string>& args, CLI::App& app) {
  static const std::vector<std::string> global_valued = {"--seed", "--out", "--threads",
                                                         "--config"};
  std::string config_path;
  std::size_t sub_pos = 0;
  CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    }
    if (!sub && std::find(global_valued.begin(), global_valued.end(), a) != global_valued.end()) {
      ++i;
      continue;
    }
    if (!sub) {
      if (auto* s = app.get_subcommand_no_throw(a)) {
        sub = s;
        sub_pos = i;
      }
    }
  }
  if (config_path.empty() || !sub) return args;

  std::vector<std::string> global_args, sub_args;
  for (const auto& e : parse_config(read_file(config_path))) {
    const std::string flag = "--" + e.key;
    const std::string where = "config file " + config_path + " line " + std::to_string(e.line);
    if (e.key == "config") throw ContractViolation(where + ": config files cannot nest");
    if (sub->get_option_no_throw(flag)) {
      sub_args.push_back(flag + "=" + e.value);
    } else if (app.get_option_no_throw(flag)) {
      global_args.push_back(flag + "=" + e.value);
    } else {
      throw ContractViolation(where + ": unknown key '" + e.key + "' for command '" +
                              sub->get_name() + "'");
    }
  }
  std::vector<std::string> out;
  out.push_back(args[0]);
  out.insert(out.end(), global_args.begin(), global_args.end());
  out.insert(out.end(), args.begin() + 1, args.begin() + static_cast<long>(sub_pos) + 1);
  out.insert(out.end(), sub_args.begin(), sub_args.end());
  out.insert(out.end(), args.begin() + static_cast<long>(sub_pos) + 1, args.end());
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::string_view text) {
  std::vector<ConfigEntry> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config entry without '=': '" + line + "'", line_no);
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw ParseError("config entry with an empty key", line_no);
    entries.push_back({key, value, line_no});
  }
  return entries;
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "features") return SweepAxis::features;
  if (name == "classes") return SweepAxis::classes;
  if (name == "additive") return SweepAxis::additive;
  if (name == "destructive") return SweepAxis::destructive;
  throw ContractViolation("unknown sweep axis '" + std::string(name) +
                          "' (expected features|classes|additive|destructive)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::features: return "features";
    case SweepAxis::classes: return "classes";
    case SweepAxis::additive: return "additive";
    case SweepAxis::destructive: return "destructive";
  }
  return "unknown";
}

std::uint64_t bench_seed(std::uint64_t master, SweepAxis axis, double value, std::size_t rep) {
  return derive_seed(master, {stream::kSweep, name_key(to_string(axis)),
                              std::bit_cast<std::uint64_t>(value), rep});
}

SyntheticSpec bench_spec(const SyntheticSpec& base, SweepAxis axis, double value,
                         std::uint64_t seed) {
  auto as_count = [&](double min) {
    if (!(value >= min) || value != std::floor(value) || value > 1e9) {
      throw ContractViolation(to_string(axis) + " value must be an integer >= " +
                              format_double(min) + ", got " + format_double(value));
    }
    return static_cast<std::size_t>(value);
  };
  SyntheticSpec spec = base;
  switch (axis) {
    case SweepAxis::features: spec.m = as_count(1); break;
    case SweepAxis::classes: spec.classes = as_count(2); break;
    case SweepAxis::additive: spec.additive_flips = as_count(0); break;
    case SweepAxis::destructive: spec.destructive_prob = value; break;
  }
  spec.seed = seed;
  if (spec.m < 1000) spec = low_dim_variant(spec);
  return spec;
}

BenchRow run_bench_point(const SyntheticSpec& base, const TrainConfig& config, SweepAxis axis,
                         double value, std::size_t rep, std::uint64_t master,
                         std::span<const double> grid_e, std::span<const double> grid_c) {
  BenchRow row{axis, value, rep, bench_seed(master, axis, value, rep), {}, {}, {}, {}};
  try {
    const SyntheticSpec spec = bench_spec(base, axis, value, row.seed);
    const SyntheticData syn = generate(spec);
    TrainConfig cfg = config;
    cfg.seed = row.seed;
    cfg.threads = 1;
    const Stopwatch watch;
    const TrainResult trained = train(syn.dataset, cfg);
    row.train_seconds = watch.seconds();
    const ThresholdSelection sel =
        grid_search_thresholds(trained.params, syn.dataset, grid_e, grid_c, cfg.lambda_c);
    const EvalReport report = summarize(sel.patterns, syn.dataset, &syn.truth);
    row.soft_f1 = report.soft->f1;
    row.auc = report.auc;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::string out = "axis,value,rep,seed,soft_f1,auc,train_seconds,error\n";
  for (const auto& r : rows) {
    out += to_string(r.axis) + "," + format_double(r.value) + "," + std::to_string(r.rep) + "," +
           std::to_string(r.seed) + "," + optional_field(r.soft_f1) + "," +
           optional_field(r.auc) + "," + optional_field(r.train_seconds) + "," +
           csv_field(r.error) + "\n";
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differential pattern mining with a binarized autoencoder", "diffnaps"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", DIFFNAPS_VERSION);

  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();
  app.add_option("--config", g.config, "key=value file; command-line flags override it");

  SyntheticSpec spec;
  bool low_dim = false;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic labeled dataset");
  add_spec_options(gen, spec);
  gen->add_flag("--low-dim", low_dim, "Five patterns per class and no shared patterns");

  TrainConfig cfg;
  std::string optimizer = to_string(cfg.optimizer);
  DataArgs data;
  std::string resume;
  auto* tr = app.add_subcommand("train", "Train a model on a labeled dataset");
  add_data_options(tr, data);
  add_train_options(tr, cfg, optimizer);
  tr->add_option("--resume", resume, "Continue from this checkpoint");

  std::string checkpoint, grid_e, grid_c;
  auto* ex = app.add_subcommand("extract", "Extract per-class patterns from a checkpoint");
  add_data_options(ex, data);
  ex->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ex->add_option("--lambda-c", cfg.lambda_c, "Classification weight in the selection objective")
      ->capture_default_str();
  add_grid_options(ex, grid_e, grid_c);

  std::string patterns_path, truth_path;
  auto* ev = app.add_subcommand("eval", "Score patterns against a dataset");
  add_data_options(ev, data);
  ev->add_option("--patterns", patterns_path, "Patterns JSON from extract")->required();
  ev->add_option("--truth", truth_path, "Ground-truth JSON from generate");

  std::string axis_name, values_text;
  std::size_t reps = 1;
  SyntheticSpec bench_base;
  TrainConfig bench_cfg;
  std::string bench_optimizer = to_string(bench_cfg.optimizer);
  auto* be = app.add_subcommand("bench", "Sweep one generator setting end to end");
  be->add_option("--axis", axis_name, "features|classes|additive|destructive")->required();
  be->add_option("--values", values_text, "Comma-separated values of the swept setting")
      ->required();
  be->add_option("--reps", reps, "Repetitions per value")->capture_default_str();
  add_spec_options(be, bench_base);
  add_train_options(be, bench_cfg, bench_optimizer);
  add_grid_options(be, grid_e, grid_c);

  std::vector<std::string> expanded;
  try {
    expanded = inject_config(args, app);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<const char*> argv;
  for (const auto& a : expanded) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const Stopwatch watch;
    const fs::path dir = g.out;
    fs::create_directories(dir);

    if (gen->parsed()) {
      spec.seed = g.seed;
      if (low_dim) spec = low_dim_variant(spec);
      const SyntheticData syn = generate(spec, g.threads);
      save_sparse(syn.dataset, dir / "data.txt", dir / "labels.txt");
      write_json(dir / "truth.json", truth_to_json(syn.truth, spec));
      Json config = spec_to_json(spec);
      config["low_dim"] = low_dim;
      write_manifest(dir, "generate", g, config, {}, {"data.txt", "labels.txt", "truth.json"},
                     Json::object(), watch.seconds());
      out << "generated " << syn.dataset.num_rows() << " rows x " << syn.dataset.num_features()
          << " features, " << syn.dataset.num_classes() << " classes in " << dir.string() << "\n";
    } else if (tr->parsed()) {
      cfg.seed = g.seed;
      cfg.threads = g.threads;
      cfg.optimizer = parse_optimizer(optimizer);
      const LabeledDataset dataset = data.load();
      std::optional<ModelParams> initial;
      if (!resume.empty()) initial = load_checkpoint(resume);
      const TrainResult result = train(dataset, cfg, initial, [&](const EpochStats& s) {
        out << "epoch " << s.epoch << " recon " << s.recon_loss << " class " << s.class_loss
            << "\n";
      });
      save_checkpoint(result.params, dir / "model.ckpt");
      write_file_atomic(dir / "train_report.csv", train_report_csv(result.report));
      write_json(dir / "train_report.json", train_report_json(result.report));
      Json config = config_to_json(cfg);
      config["data"] = data.data;
      config["labels"] = data.labels;
      config["resume"] = resume.empty() ? Json(nullptr) : Json(resume);
      std::vector<fs::path> inputs{data.data, data.labels};
      if (!resume.empty()) inputs.emplace_back(resume);
      write_manifest(dir, "train", g, config, inputs,
                     {"model.ckpt", "train_report.csv", "train_report.json"}, Json::object(),
                     watch.seconds());
      out << "trained " << result.report.epochs.size() << " epochs; checkpoint "
          << (dir / "model.ckpt").string() << "\n";
    } else if (ex->parsed()) {
      const LabeledDataset dataset = data.load();
      const ModelParams params = load_checkpoint(checkpoint);
      const auto ge = grid_or_default(grid_e);
      const auto gc = grid_or_default(grid_c);
      const ThresholdSelection sel =
          grid_search_thresholds(params, dataset, ge, gc, cfg.lambda_c, g.threads);
      write_json(dir / "patterns.json", patterns_to_json(sel.patterns));
      write_file_atomic(dir / "patterns.txt", patterns_to_text(sel.patterns));
      Json config = {{"data", data.data},     {"labels", data.labels}, {"checkpoint", checkpoint},
                     {"lambda_c", cfg.lambda_c}, {"grid_e", ge},          {"grid_c", gc}};
      Json selection = {{"selection",
                         {{"tau_e", sel.tau_e}, {"tau_c", sel.tau_c}, {"error", sel.error}}}};
      write_manifest(dir, "extract", g, config, {data.data, data.labels, checkpoint},
                     {"patterns.json", "patterns.txt"}, selection, watch.seconds());
      out << "selected tau_e " << sel.tau_e << " tau_c " << sel.tau_c << "; "
          << sel.patterns.total_assigned() << " patterns\n";
    } else if (ev->parsed()) {
      const LabeledDataset dataset = data.load();
      const DifferentialPatterns patterns = patterns_from_json(Json::parse(read_file(patterns_path)));
      std::optional<GroundTruth> truth;
      if (!truth_path.empty()) truth = truth_from_json(Json::parse(read_file(truth_path)));
      const EvalReport report = summarize(patterns, dataset, truth ? &*truth : nullptr);
      write_json(dir / "eval_report.json", eval_report_json(report));
      write_file_atomic(dir / "curve.csv", curve_csv(report));
      Json config = {{"data", data.data},
                     {"labels", data.labels},
                     {"patterns", patterns_path},
                     {"truth", truth_path.empty() ? Json(nullptr) : Json(truth_path)}};
      std::vector<fs::path> inputs{data.data, data.labels, patterns_path};
      if (!truth_path.empty()) inputs.emplace_back(truth_path);
      write_manifest(dir, "eval", g, config, inputs, {"eval_report.json", "curve.csv"},
                     Json::object(), watch.seconds());
      out << "kept " << report.pattern_count << " patterns; auc " << report.auc;
      if (report.soft) out << "; soft F1 " << report.soft->f1;
      out << "\n";
    } else if (be->parsed()) {
      const SweepAxis axis = parse_axis(axis_name);
      const auto values = parse_list(values_text);
      bench_cfg.optimizer = parse_optimizer(bench_optimizer);
      const auto ge = grid_or_default(grid_e);
      const auto gc = grid_or_default(grid_c);
      std::vector<BenchRow> rows(values.size() * reps);
      parallel_for(rows.size(), g.threads, [&](std::size_t t) {
        rows[t] = run_bench_point(bench_base, bench_cfg, axis, values[t / reps], t % reps, g.seed,
                                  ge, gc);
      });
      write_file_atomic(dir / "bench.csv", bench_csv(rows));
      Json config = {{"axis", to_string(axis)},
                     {"values", values},
                     {"reps", reps},
                     {"base_spec", spec_to_json(bench_base)},
                     {"train", config_to_json(bench_cfg)},
                     {"grid_e", ge},
                     {"grid_c", gc}};
      write_manifest(dir, "bench", g, config, {}, {"bench.csv"}, Json::object(), watch.seconds());
      const auto failed = std::count_if(rows.begin(), rows.end(),
                                        [](const BenchRow& r) { return !r.error.empty(); });
      out << "wrote " << rows.size() << " rows (" << failed << " failed) to "
          << (dir / "bench.csv").string() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace diffnaps::cli
