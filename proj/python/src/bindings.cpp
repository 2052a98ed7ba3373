#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "diffnaps/eval.hpp"
#include "diffnaps/extract.hpp"
#include "diffnaps/serialize.hpp"
#include "diffnaps/synth.hpp"
#include "diffnaps/train.hpp"

namespace py = pybind11;
using namespace diffnaps;

namespace {

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Matrix from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ContractViolation("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

py::object to_python(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_python(const py::object& o) {
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::vector<FeatureIndex>> rows_of(const BinaryDataset& d) {
  std::vector<std::vector<FeatureIndex>> rows(d.num_rows());
  for (std::size_t i = 0; i < d.num_rows(); ++i) rows[i].assign(d.row(i).begin(), d.row(i).end());
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differential pattern mining with a binarized autoencoder";

  static py::exception<Error> base(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<UndefinedSupport>(m, "UndefinedSupport", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<LabeledDataset>(m, "Dataset")
      .def(py::init([](std::size_t num_features, const std::vector<std::vector<FeatureIndex>>& rows,
                       const std::vector<ClassId>& labels) {
             return make_labeled(BinaryDataset(num_features, rows), labels);
           }),
           py::arg("num_features"), py::arg("rows"), py::arg("labels"))
      .def_property_readonly("num_rows", &LabeledDataset::num_rows)
      .def_property_readonly("num_features", &LabeledDataset::num_features)
      .def_property_readonly("num_classes", &LabeledDataset::num_classes)
      .def_property_readonly("labels", [](const LabeledDataset& d) {
        return std::vector<ClassId>(d.labels().begin(), d.labels().end());
      })
      .def("rows", [](const LabeledDataset& d) { return rows_of(d.data()); })
      .def("density", [](const LabeledDataset& d) { return density(d.data()); })
      .def("save", &save_sparse, py::arg("data_path"), py::arg("labels_path"))
      .def("__len__", &LabeledDataset::num_rows);

  m.def("load_sparse", &load_sparse, py::arg("data_path"), py::arg("labels_path"),
        py::arg("num_features") = std::nullopt);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("n_per_class", &SyntheticSpec::n_per_class)
      .def_readwrite("m", &SyntheticSpec::m)
      .def_readwrite("classes", &SyntheticSpec::classes)
      .def_readwrite("patterns_per_class", &SyntheticSpec::patterns_per_class)
      .def_readwrite("shared_patterns", &SyntheticSpec::shared_patterns)
      .def_readwrite("class_len_lo", &SyntheticSpec::class_len_lo)
      .def_readwrite("class_len_hi", &SyntheticSpec::class_len_hi)
      .def_readwrite("shared_len_frac_lo", &SyntheticSpec::shared_len_frac_lo)
      .def_readwrite("shared_len_frac_hi", &SyntheticSpec::shared_len_frac_hi)
      .def_readwrite("planted_class_per_row", &SyntheticSpec::planted_class_per_row)
      .def_readwrite("planted_shared_per_row", &SyntheticSpec::planted_shared_per_row)
      .def_readwrite("additive_flips", &SyntheticSpec::additive_flips)
      .def_readwrite("destructive_prob", &SyntheticSpec::destructive_prob)
      .def_readwrite("label_fidelity", &SyntheticSpec::label_fidelity)
      .def_readwrite("seed", &SyntheticSpec::seed)
      .def("validate", &SyntheticSpec::validate)
      .def("low_dim_variant", [](const SyntheticSpec& s) { return low_dim_variant(s); });

  py::class_<GroundTruth>(m, "GroundTruth")
      .def_property_readonly("class_patterns", [](const GroundTruth& t) {
        std::vector<std::vector<std::vector<FeatureIndex>>> out;
        for (const auto& cls : t.class_patterns) {
          auto& o = out.emplace_back();
          for (const auto& p : cls) o.emplace_back(p.features().begin(), p.features().end());
        }
        return out;
      })
      .def_property_readonly("shared_patterns", [](const GroundTruth& t) {
        std::vector<std::vector<FeatureIndex>> out;
        for (const auto& p : t.shared_patterns) out.emplace_back(p.features().begin(), p.features().end());
        return out;
      });

  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("dataset", &SyntheticData::dataset)
      .def_readonly("truth", &SyntheticData::truth)
      .def_readonly("generating_class", &SyntheticData::generating_class);

  m.def("generate", &generate, py::arg("spec"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("lambda_c", &TrainConfig::lambda_c)
      .def_readwrite("kappa0", &TrainConfig::kappa0)
      .def_readwrite("lambda0", &TrainConfig::lambda0)
      .def_readwrite("sched_gamma", &TrainConfig::sched_gamma)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("init_lo", &TrainConfig::init_lo)
      .def_readwrite("init_hi", &TrainConfig::init_hi)
      .def_property(
          "optimizer", [](const TrainConfig& c) { return to_string(c.optimizer); },
          [](TrainConfig& c, const std::string& name) { c.optimizer = parse_optimizer(name); })
      .def_readwrite("threads", &TrainConfig::threads)
      .def("validate", &TrainConfig::validate);

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init([](const py::array_t<double>& encoder, std::vector<double> bias,
                       const py::array_t<double>& classifier) {
             ModelParams p{from_array(encoder), std::move(bias), from_array(classifier)};
             p.check_invariants();
             return p;
           }),
           py::arg("encoder"), py::arg("bias"), py::arg("classifier"))
      .def_property_readonly("encoder", [](const ModelParams& p) { return to_array(p.encoder); })
      .def_property_readonly("classifier", [](const ModelParams& p) { return to_array(p.classifier); })
      .def_readonly("bias", &ModelParams::bias)
      .def_property_readonly("hidden", &ModelParams::hidden)
      .def_property_readonly("features", &ModelParams::features)
      .def_property_readonly("classes", &ModelParams::classes)
      .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); })
      .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](const LabeledDataset& data, const TrainConfig& config, std::optional<ModelParams> initial) {
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(data, config, std::move(initial));
        }
        return py::make_tuple(result.params, to_python(train_report_json(result.report)));
      },
      py::arg("data"), py::arg("config"), py::arg("initial") = std::nullopt,
      "Returns (params, report) where report is a dict with one entry per epoch.");

  m.def("default_threshold_grid", &default_threshold_grid);

  m.def(
      "extract",
      [](const ModelParams& params, const LabeledDataset& data, std::optional<std::vector<double>> grid_e,
         std::optional<std::vector<double>> grid_c, double lambda_c, unsigned threads) {
        const auto grid = default_threshold_grid();
        ThresholdSelection sel;
        {
          py::gil_scoped_release release;
          sel = grid_search_thresholds(params, data, grid_e ? *grid_e : grid, grid_c ? *grid_c : grid, lambda_c,
                                       threads);
        }
        py::dict out;
        out["tau_e"] = sel.tau_e;
        out["tau_c"] = sel.tau_c;
        out["error"] = sel.error;
        out["patterns"] = to_python(patterns_to_json(sel.patterns));
        return out;
      },
      py::arg("params"), py::arg("data"), py::arg("grid_e") = std::nullopt, py::arg("grid_c") = std::nullopt,
      py::arg("lambda_c") = 1.0, py::arg("threads") = 1,
      "Grid-searches the two thresholds and returns the selection with its per-class patterns.");

  m.def(
      "evaluate",
      [](const py::object& patterns, const LabeledDataset& data, const GroundTruth* truth) {
        const auto dp = patterns_from_json(from_python(patterns));
        return to_python(eval_report_json(summarize(dp, data, truth)));
      },
      py::arg("patterns"), py::arg("data"), py::arg("truth") = nullptr,
      "patterns uses the same layout as patterns.json: {\"0\": [[features...], ...], \"1\": ...}.");

  m.def("jaccard", [](std::vector<FeatureIndex> a, std::vector<FeatureIndex> b) {
    return jaccard(Pattern(std::move(a)), Pattern(std::move(b)));
  });
}
