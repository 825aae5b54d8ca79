#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cetx/checkpoint.hpp"
#include "cetx/config.hpp"
#include "cetx/early_exit.hpp"
#include "cetx/gradcheck.hpp"
#include "cetx/metrics.hpp"
#include "cetx/objectives.hpp"
#include "cetx/perturb.hpp"
#include "cetx/pipeline.hpp"
#include "cetx/report.hpp"

namespace py = pybind11;
using namespace cetx;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

WindowedDataset to_dataset(const FloatArray& windows, const std::vector<std::uint16_t>& labels,
                           std::vector<std::uint16_t> groups, std::size_t num_classes) {
  if (windows.ndim() != 3) throw ShapeError("windows: expected an array of shape (N, channels, length)");
  WindowedDataset d;
  d.meta.num_classes = num_classes;
  d.meta.channels = static_cast<std::size_t>(windows.shape(1));
  d.meta.window_length = static_cast<std::size_t>(windows.shape(2));
  const std::size_t n = static_cast<std::size_t>(windows.shape(0));
  const std::size_t per = d.meta.channels * d.meta.window_length;
  for (std::size_t i = 0; i < n; ++i) {
    d.windows.emplace_back(Shape{d.meta.channels, d.meta.window_length},
                           std::vector<float>(windows.data() + i * per, windows.data() + (i + 1) * per));
  }
  d.labels = labels;
  d.groups = groups.empty() ? std::vector<std::uint16_t>(n, 0) : std::move(groups);
  d.validate();
  return d;
}

py::dict dataset_dict(const WindowedDataset& d) {
  const std::size_t c = d.meta.channels, l = d.meta.window_length;
  FloatArray windows({d.size(), c, l});
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::copy(d.windows[i].data().begin(), d.windows[i].data().end(), windows.mutable_data() + i * c * l);
  }
  py::dict out;
  out["windows"] = windows;
  out["labels"] = py::array_t<std::uint16_t>(d.labels.size(), d.labels.data());
  out["groups"] = py::array_t<std::uint16_t>(d.groups.size(), d.groups.data());
  out["class_names"] = d.meta.class_names;
  return out;
}

ConfusionMatrix to_confusion(const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& m) {
  if (m.ndim() != 2 || m.shape(0) != m.shape(1)) throw ShapeError("confusion matrix must be square");
  const std::size_t k = static_cast<std::size_t>(m.shape(0));
  std::vector<std::vector<std::uint64_t>> rows(k, std::vector<std::uint64_t>(k));
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) rows[r][c] = m.at(r, c);
  }
  return ConfusionMatrix::from_rows(rows);
}

py::dict metrics_dict(const ClassificationMetrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["macro_f1"] = m.macro_f1;
  d["kappa"] = m.kappa;
  return d;
}

// A trained network together with its input statistics.
struct Model {
  MultiExitNet net;
  CheckpointInfo info;

  Tensor<float> standardize(const FloatArray& x) const {
    auto t = to_tensor(x);
    const Shape expect{net.config().channels_in, net.config().length_in};
    if (t.shape() != expect) {
      throw ShapeError("network expects windows of shape (" + std::to_string(expect[0]) + ", " +
                       std::to_string(expect[1]) + ")");
    }
    if (info.channel_stats) {
      WindowedDataset one;
      one.meta.channels = net.config().channels_in;
      one.meta.window_length = net.config().length_in;
      one.windows.push_back(std::move(t));
      apply_channel_stats(one, *info.channel_stats);
      t = std::move(one.windows.front());
    }
    return t;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-exit time-series classifiers with confidence-gated consistency training";

  // Translators run newest first: the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "generate_synthetic",
      [](std::size_t num_classes, std::size_t channels, std::size_t length, std::size_t per_class,
         std::size_t groups, std::uint64_t seed, double noise_std) {
        SynthSpec s{num_classes, channels, length, per_class, groups, seed, noise_std};
        return dataset_dict(generate_synthetic(s));
      },
      py::arg("num_classes") = 6, py::arg("channels") = 3, py::arg("length") = 400, py::arg("per_class") = 100,
      py::arg("groups") = 10, py::arg("seed") = 0, py::arg("noise_std") = 0.1,
      "Synthetic windows as a dict with windows (N, C, L), labels and groups.");

  m.def("load_windows", [](const std::filesystem::path& p) { return dataset_dict(load_windows_file(p)); },
        py::arg("path"));
  m.def(
      "save_windows",
      [](const std::filesystem::path& p, const FloatArray& windows, const std::vector<std::uint16_t>& labels,
         const std::vector<std::uint16_t>& groups, std::size_t num_classes) {
        save_windows_file(to_dataset(windows, labels, groups, num_classes), p);
      },
      py::arg("path"), py::arg("windows"), py::arg("labels"), py::arg("groups"), py::arg("num_classes"));

  m.def(
      "additive_noise",
      [](const FloatArray& x, double sigma, std::uint64_t seed) {
        Rng rng = make_rng(seed, {});
        return to_array(additive_noise(to_tensor(x), sigma, rng));
      },
      py::arg("x"), py::arg("sigma"), py::arg("seed") = 0);
  m.def(
      "multiplicative_scale",
      [](const FloatArray& x, double sigma, std::uint64_t seed) {
        Rng rng = make_rng(seed, {});
        return to_array(multiplicative_scale(to_tensor(x), sigma, rng));
      },
      py::arg("x"), py::arg("sigma"), py::arg("seed") = 0);
  m.def(
      "time_warp",
      [](const FloatArray& x, double sigma, std::size_t knots, std::uint64_t seed) {
        Rng rng = make_rng(seed, {});
        return to_array(time_warp(to_tensor(x), sigma, knots, rng));
      },
      py::arg("x"), py::arg("sigma"), py::arg("knots") = 4, py::arg("seed") = 0);
  m.def(
      "warp_positions",
      [](std::size_t length, double sigma, std::size_t knots, std::uint64_t seed) {
        Rng rng = make_rng(seed, {});
        return warp_positions(length, sigma, knots, rng);
      },
      py::arg("length"), py::arg("sigma"), py::arg("knots") = 4, py::arg("seed") = 0);
  m.def(
      "mask_segment",
      [](const FloatArray& x, std::size_t mask_length, std::uint64_t seed) {
        Rng rng = make_rng(seed, {});
        return to_array(mask_segment(to_tensor(x), mask_length, rng));
      },
      py::arg("x"), py::arg("mask_length"), py::arg("seed") = 0);

  m.def("kappa_schedule", &kappa_schedule, py::arg("step"), py::arg("total_steps"), py::arg("kappa_min") = 0.5,
        py::arg("kappa_max") = 0.9);
  m.def(
      "normalized_entropy", [](const std::vector<double>& p) { return normalized_entropy(p); }, py::arg("probs"),
      "Shannon entropy divided by ln K.");
  m.def(
      "choose_exit", [](const std::vector<double>& h, double phi) { return choose_exit(h, phi); },
      py::arg("entropies"), py::arg("phi"), "First exit (1-based) with entropy strictly below phi, else the last.");

  m.def("accuracy", [](const py::array_t<std::uint64_t>& cm) { return accuracy(to_confusion(cm)); });
  m.def("macro_f1", [](const py::array_t<std::uint64_t>& cm) { return macro_f1(to_confusion(cm)); });
  m.def("cohens_kappa", [](const py::array_t<std::uint64_t>& cm) { return cohens_kappa(to_confusion(cm)); });

  m.def(
      "gradcheck",
      [](bool inject_fault) {
        py::list out;
        for (const auto& r : gradcheck_suite(inject_fault)) {
          out.append(py::make_tuple(r.subject, r.max_rel_error(), r.passed));
        }
        return out;
      },
      py::arg("inject_fault") = false, "List of (subject, max relative error, passed).");

  m.def(
      "normalize_config", [](const std::string& text) {
        auto cfg = RunConfig::from_key_values(KeyValues::parse(text));
        cfg.validate();
        return cfg.to_text();
      },
      py::arg("text"), "Validates a key = value configuration and returns every effective setting.");

  py::class_<Model>(m, "Model")
      .def_static(
          "load",
          [](const std::filesystem::path& p) {
            auto loaded = load_checkpoint(p);
            return Model{std::move(loaded.net), std::move(loaded.info)};
          },
          py::arg("path"))
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_checkpoint(self.net, self.info, p); })
      .def_property_readonly("num_exits", [](const Model& self) { return self.net.num_exits(); })
      .def_property_readonly("num_classes", [](const Model& self) { return self.net.num_classes(); })
      .def_property_readonly("class_names", [](const Model& self) { return self.info.class_names; })
      .def("macs_until_exit", [](const Model& self, std::size_t e) { return self.net.macs_until_exit(e); })
      .def(
          "predict_all",
          [](const Model& self, const FloatArray& x) {
            py::list out;
            for (const auto& logits : self.net.predict_all(self.standardize(x))) out.append(to_array(logits));
            return out;
          },
          py::arg("x"), "Logits of every exit for one raw window (C, L).")
      .def(
          "infer",
          [](const Model& self, const FloatArray& x, double phi) {
            ExitPolicy policy{phi};
            policy.validate();
            const auto t = infer_early_exit(self.net, self.standardize(x), policy);
            py::dict d;
            d["exit"] = t.chosen_exit;
            d["label"] = t.predicted_label;
            d["confidence"] = t.confidence;
            d["entropies"] = t.entropies;
            return d;
          },
          py::arg("x"), py::arg("phi"), "Early-exit inference on one raw window.")
      .def(
          "evaluate",
          [](const Model& self, const FloatArray& windows, const std::vector<std::uint16_t>& labels,
             std::vector<double> phi_grid, double noise_sigma, std::uint64_t noise_seed) {
            auto data = to_dataset(windows, labels, {}, self.net.num_classes());
            if (self.info.channel_stats) apply_channel_stats(data, *self.info.channel_stats);
            add_test_noise(data, noise_sigma, noise_seed);
            py::list rows;
            for (const auto& r : sweep_thresholds(self.net, data, std::move(phi_grid))) {
              auto d = metrics_dict(r.metrics);
              d["phi"] = r.phi;
              d["average_exit"] = r.stats.average_exit;
              d["exit_fractions"] = r.stats.fractions;
              rows.append(d);
            }
            return rows;
          },
          py::arg("windows"), py::arg("labels"), py::arg("phi_grid") = default_phi_grid(),
          py::arg("noise_sigma") = 0.0, py::arg("noise_seed") = 0, "One row per threshold, ascending.");

  m.def(
      "train",
      [](const std::string& config_text, const std::filesystem::path& out_dir) {
        auto cfg = RunConfig::from_key_values(KeyValues::parse(config_text));
        TrainOutcome outcome = [&] {
          py::gil_scoped_release release;
          return run_training(cfg, out_dir);
        }();
        const auto last = evaluate_exit(outcome.result.net, outcome.data.test, outcome.result.net.num_exits());
        py::dict d;
        d["model"] = Model{std::move(outcome.result.net), {outcome.data.train.meta.class_names, outcome.data.stats}};
        d["report_csv"] = outcome.result.report.to_csv();
        d["test_last_exit"] = metrics_dict(last);
        return d;
      },
      py::arg("config"), py::arg("out_dir"),
      "Runs a training configuration; writes the run files into out_dir.");
}
