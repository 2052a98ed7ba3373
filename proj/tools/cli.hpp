#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffnaps/synth.hpp"
#include "diffnaps/train.hpp"

namespace diffnaps::cli {

/// Runs one command line; args[0] is the program name. Returns the process exit
/// code: 0 when every requested artifact was written, 1 on a library error,
/// 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Entries of a key=value config file as (key, value, line). Blank lines and
/// lines starting with '#' are skipped; underscores in keys become dashes.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};
std::vector<ConfigEntry> parse_config(std::string_view text);

enum class SweepAxis { features, classes, additive, destructive };
SweepAxis parse_axis(std::string_view name);
std::string to_string(SweepAxis axis);

/// splitmix64 fan-out of (master, "sweep", FNV-1a(axis name), bits of value, rep).
std::uint64_t bench_seed(std::uint64_t master, SweepAxis axis, double value, std::size_t rep);

/// The generator spec for one grid point: `base` with the swept field set to
/// `value` and seed set to `seed`; m < 1000 switches to the low-dimensional variant.
SyntheticSpec bench_spec(const SyntheticSpec& base, SweepAxis axis, double value,
                         std::uint64_t seed);

struct BenchRow {
  SweepAxis axis = SweepAxis::features;
  double value = 0.0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::optional<double> soft_f1;
  std::optional<double> auc;
  std::optional<double> train_seconds;
  std::string error;  // empty on success
};

/// generate -> train -> grid-search extraction -> eval for one grid point.
/// Failures are captured in `error` instead of thrown.
BenchRow run_bench_point(const SyntheticSpec& base, const TrainConfig& config, SweepAxis axis,
                         double value, std::size_t rep, std::uint64_t master,
                         std::span<const double> grid_e, std::span<const double> grid_c);

/// Header: axis,value,rep,seed,soft_f1,auc,train_seconds,error
std::string bench_csv(std::span<const BenchRow> rows);

}  // namespace diffnaps::cli
