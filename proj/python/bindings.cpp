// Python bindings. Structured values cross the boundary as JSON text, which
// the package wrapper turns into dicts; parameter arrays become numpy arrays.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "fskv/analysis.hpp"
#include "fskv/checkpoint.hpp"
#include "fskv/corpus.hpp"
#include "fskv/error.hpp"
#include "fskv/evaluation.hpp"
#include "fskv/fewshot.hpp"
#include "fskv/sampler.hpp"
#include "fskv/variational.hpp"

namespace py = pybind11;
using namespace fskv;
using nlohmann::json;

namespace {

json parse(const std::string& text) {
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

Decoder parse_decoder(const std::string& name) {
  if (name == "prototype") return Decoder::kPrototype;
  if (name == "nnshot") return Decoder::kNearestNeighbor;
  throw Error(ErrorKind::kConfig, "unknown decoder '" + name + "'");
}

std::vector<EntitySpan> to_spans(const std::vector<std::tuple<std::size_t, std::size_t, std::string, std::string>>& raw) {
  std::vector<EntitySpan> out;
  for (const auto& [start, end, role, type] : raw) {
    if (role != "Key" && role != "Value") {
      throw Error(ErrorKind::kInput, "span role must be Key or Value, got '" + role + "'");
    }
    out.push_back({start, end, role == "Key" ? Role::kKey : Role::kValue, type});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_fskv, m) {
  m.doc() = "Few-shot key-value extraction core";

  static PyObject* error_type =
      PyErr_NewException("fskv._fskv.FskvError", PyExc_RuntimeError, nullptr);
  m.add_object("FskvError", py::handle(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type,
                      (std::string(error_kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<>())
      .def_static("from_json", [](const std::string& s) { return corpus_from_json(parse(s)); })
      .def_static("from_cord_json", [](const std::string& s) { return corpus_from_cord_json(parse(s)); })
      .def_static("load", [](const std::string& path) { return load_corpus(path); })
      .def("save", [](const Corpus& c, const std::string& path) { save_corpus(c, path); })
      .def("to_json", [](const Corpus& c) { return corpus_to_json(c).dump(); })
      .def("__len__", [](const Corpus& c) { return c.documents.size(); })
      .def_property_readonly("relation_types",
                             [](const Corpus& c) { return c.schema.entity_types; })
      .def("stats", [](const Corpus& c) {
        const auto s = corpus_stats(c);
        return std::make_tuple(s.doc_count, s.box_count, s.entity_type_count,
                               s.relation_type_count);
      });

  m.def("default_synthetic_config",
        [](std::size_t types, int docs, std::uint64_t seed) {
          return synthetic_config_to_json(default_synthetic_config(types, docs, seed)).dump();
        },
        py::arg("types") = 10, py::arg("docs") = 300, py::arg("seed") = 0);
  m.def("generate_synthetic",
        [](const std::string& config) {
          return generate_synthetic(synthetic_config_from_json(parse(config)));
        },
        py::arg("config"));
  m.def("split",
        [](const Corpus& c, const std::string& mode, double fraction) {
          return split_inter_intra(c, parse_split_mode(mode), fraction);
        },
        py::arg("corpus"), py::arg("mode") = "inter", py::arg("train_fraction") = 0.6);
  m.def("sample_episodes",
        [](const Corpus& c, int n, int k, int k_prime, int episodes, std::uint64_t seed) {
          const auto extended = extend_corpus(c);
          Rng rng(derive_seed(seed, Stream::kSampling));
          std::vector<std::pair<std::string, std::vector<std::string>>> out;
          for (int e = 0; e < episodes; ++e) {
            const Episode ep = sample_episode(extended, {n, k, k_prime}, rng);
            out.emplace_back(episode_to_json(ep).dump(), episode_violations(ep));
          }
          return out;
        },
        py::arg("corpus"), py::arg("n") = 4, py::arg("k") = 1, py::arg("k_prime") = 1,
        py::arg("episodes") = 1, py::arg("seed") = 0);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config, std::uint64_t seed) {
             return init_model(model_config_from_json(parse(config)), seed);
           }),
           py::arg("config") = "", py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return load_model(path); })
      .def("save", [](const Model& mdl, const std::string& path) { save_checkpoint(mdl, path); })
      .def_property_readonly("config",
                             [](const Model& mdl) { return model_config_to_json(mdl.config).dump(); })
      .def_readonly("seed", &Model::seed)
      .def("parameter_names",
           [](const Model& mdl) {
             std::vector<std::string> names;
             for (std::size_t i = 0; i < mdl.params.size(); ++i) names.push_back(mdl.params[i].name);
             return names;
           })
      .def("parameter", [](const Model& mdl, const std::string& name) {
        return Eigen::MatrixXd(mdl.params.at(name).value);
      });

  m.def("train",
        [](const Corpus& c, const std::string& config,
           const std::function<void(int, double)>& log) {
          const TrainConfig cfg = train_config_from_json(parse(config));
          TrainResult result;
          {
            py::gil_scoped_release release;
            result = train(c, cfg, [&](int step, const LossBreakdown& l) {
              if (!log) return;
              py::gil_scoped_acquire acquire;
              log(step, l.total);
            });
          }
          std::vector<std::string> history;
          for (const auto& l : result.history) history.push_back(loss_to_json(l).dump());
          return std::make_pair(std::move(result.model), std::move(history));
        },
        py::arg("corpus"), py::arg("config") = "", py::arg("log") = nullptr);
  m.def("evaluate",
        [](const Model& mdl, const Corpus& c, int n, int k, int k_prime, int episodes,
           std::uint64_t seed, const std::string& decoder) {
          ModelPredictor predictor(mdl, parse_decoder(decoder));
          py::gil_scoped_release release;
          return eval_report_to_json(evaluate(predictor, c, {n, k, k_prime}, episodes, seed)).dump();
        },
        py::arg("model"), py::arg("corpus"), py::arg("n") = 4, py::arg("k") = 1,
        py::arg("k_prime") = 1, py::arg("episodes") = 500, py::arg("seed") = 0,
        py::arg("decoder") = "prototype");
  m.def("fit_roi",
        [](Model& mdl, const Corpus& c, int steps, int batch, double learning_rate,
           std::uint64_t seed) {
          RoiFitConfig cfg;
          cfg.steps = steps;
          cfg.batch = batch;
          cfg.learning_rate = learning_rate;
          cfg.seed = seed;
          py::gil_scoped_release release;
          return fit_roi(mdl, c.documents, cfg);
        },
        py::arg("model"), py::arg("corpus"), py::arg("steps") = 2000, py::arg("batch") = 0,
        py::arg("learning_rate") = 3e-3, py::arg("seed") = 0);
  m.def("mean_window_iou",
        [](const Model& mdl, const Corpus& c) { return mean_window_iou(mdl, c.documents); },
        py::arg("model"), py::arg("corpus"));
  m.def("grad_check",
        [](const std::string& config, std::uint64_t seed, double step, double tolerance,
           int coordinates) {
          const TrainConfig cfg = train_config_from_json(parse(config));
          const Corpus corpus = generate_synthetic(default_synthetic_config(4, 24, seed));
          Rng rng(derive_seed(seed, Stream::kSampling));
          const Episode ep = sample_episode(extend_corpus(corpus), cfg.shape, rng);
          const auto r = grad_check(init_model(cfg.model, seed), ep, cfg, step, tolerance, seed,
                                    coordinates);
          std::vector<std::tuple<std::string, double, bool>> out;
          for (const auto& e : r.entries) out.emplace_back(e.name, e.max_relative_error, e.passed);
          return out;
        },
        py::arg("config") = "", py::arg("seed") = 0, py::arg("step") = 1e-4,
        py::arg("tolerance") = 1e-3, py::arg("coordinates") = 20);
  m.def("similarity_heatmap",
        [](const Model& mdl, const Corpus& c, int samples, std::uint64_t seed) {
          return similarity_report_to_json(similarity_heatmap(mdl, c, samples, seed)).dump();
        },
        py::arg("model"), py::arg("corpus"), py::arg("samples_per_type") = 100,
        py::arg("seed") = 0);
  m.def("distance_curve",
        [](const Model& mdl, const Corpus& c, std::vector<int> shots, int repetitions,
           std::uint64_t seed) {
          return distance_curve_to_json(prototype_distance_curve(mdl, c, shots, repetitions, seed))
              .dump();
        },
        py::arg("model"), py::arg("corpus"), py::arg("shots") = std::vector<int>{1, 2, 3, 4, 5},
        py::arg("repetitions") = 200, py::arg("seed") = 0);

  m.def("span_f1",
        [](const std::vector<std::tuple<std::size_t, std::size_t, std::string, std::string>>& predicted,
           const std::vector<std::tuple<std::size_t, std::size_t, std::string, std::string>>& gold) {
          const auto s = span_f1(to_spans(predicted), to_spans(gold));
          return std::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("predicted"), py::arg("gold"));
  m.def("kl_std_normal",
        [](const std::vector<double>& mu, const std::vector<double>& log_var) {
          if (mu.size() != log_var.size()) {
            throw Error(ErrorKind::kInput, "mean and log-variance differ in length");
          }
          const auto n = static_cast<Eigen::Index>(mu.size());
          return kl_std_normal(GaussianLatent{Eigen::Map<const RowVector>(mu.data(), n),
                                              Eigen::Map<const RowVector>(log_var.data(), n)});
        },
        py::arg("mu"), py::arg("log_var"));
}
