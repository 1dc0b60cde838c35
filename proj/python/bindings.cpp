// Thin pybind11 surface over the C++ core: SQL utilities, the Hungarian
// solver, config handling and train / predict / evaluate on a loaded corpus.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtsql/eval/dataset.hpp"
#include "mtsql/linking/text.hpp"
#include "mtsql/train/evaluate.hpp"
#include "mtsql/train/trainer.hpp"

namespace py = pybind11;
using namespace mtsql;

namespace {

struct Session {
  eval::Corpus corpus;

  const schema::SchemaGraph& schema(const std::string& db) const {
    auto it = corpus.schemas.find(db);
    if (it == corpus.schemas.end()) throw py::key_error("unknown db_id: " + db);
    return it->second;
  }
  const schema::Database& database(const std::string& db) const {
    auto it = corpus.databases.find(db);
    if (it == corpus.databases.end()) throw py::key_error("no database content for " + db);
    return it->second;
  }
};

train::TrainConfig make_config(const std::string& text, const std::vector<std::string>& overrides) {
  train::TrainConfig c = train::parse_config(text);
  for (const auto& o : overrides) train::apply_override(c, o);
  c.validate();
  return c;
}

eval::Metric metric(const std::string& m) {
  if (m == "exact") return eval::Metric::ExactSetMatch;
  if (m == "exec") return eval::Metric::Execution;
  throw py::value_error("metric must be 'exact' or 'exec'");
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mtsql core bindings";

  m.def("tokenize", &linking::tokenize, py::arg("text"));
  m.def("stem", [](const std::string& w) { return linking::stem(w); }, py::arg("word"));
  m.def(
      "hungarian_match",
      [](const std::vector<std::vector<double>>& cost) {
        auto a = ote::hungarian_match(cost);
        return py::make_tuple(a.assignment, a.total);
      },
      py::arg("cost"), "Optimal injective row-to-column assignment for an m x Z cost matrix, m <= Z.");
  m.def("config_keys", &train::config_keys);
  m.def(
      "default_config", [] { return train::format_config(train::TrainConfig{}); },
      "Every config key with its default, in config-file form.");
  m.def(
      "check_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return train::format_config(make_config(text, overrides));
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{});

  py::register_exception<train::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<sql::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<train::TrainError>(m, "TrainError", PyExc_RuntimeError);
  py::register_exception<tensor::CheckpointError>(m, "CheckpointError", PyExc_IOError);

  py::class_<train::Model, std::shared_ptr<train::Model>>(m, "Model")
      .def_property_readonly("config", [](const train::Model& md) { return train::format_config(md.config); })
      .def_property_readonly("parameter_count",
                             [](const train::Model& md) {
                               std::size_t n = 0;
                               for (const auto& t : md.store.values()) n += t.size();
                               return n;
                             })
      .def("save", [](const train::Model& md, const std::string& path) { train::save_model(md, path); })
      .def("to_bytes", [](const train::Model& md) { return py::bytes(train::serialize_model(md)); })
      .def_static("load", [](const std::string& path) { return std::make_shared<train::Model>(train::load_model(path)); });

  py::class_<Session>(m, "Session")
      .def(py::init([](const std::string& tables, const std::string& content) {
             return std::make_unique<Session>(Session{eval::load_corpus(tables, content)});
           }),
           py::arg("tables"), py::arg("content") = "")
      .def_property_readonly("db_ids",
                             [](const Session& s) {
                               std::vector<std::string> ids;
                               for (const auto& [id, _] : s.corpus.schemas) ids.push_back(id);
                               return ids;
                             })
      .def(
          "canonical_sql",
          [](const Session& s, const std::string& q, const std::string& db) {
            return sql::to_sql(*sql::parse_sql(q, s.schema(db)), s.schema(db));
          },
          py::arg("sql"), py::arg("db_id"))
      .def(
          "hardness",
          [](const Session& s, const std::string& q, const std::string& db) {
            return std::string(eval::hardness_name(eval::hardness(*sql::parse_sql(q, s.schema(db)))));
          },
          py::arg("sql"), py::arg("db_id"))
      .def(
          "exact_set_match",
          [](const Session& s, const std::string& pred, const std::string& gold, const std::string& db) {
            return eval::exact_set_match(*sql::parse_sql(pred, s.schema(db)), *sql::parse_sql(gold, s.schema(db)));
          },
          py::arg("pred"), py::arg("gold"), py::arg("db_id"))
      .def(
          "execution_match",
          [](const Session& s, const std::string& pred, const std::string& gold, const std::string& db) {
            return eval::execution_accuracy(pred, *sql::parse_sql(gold, s.schema(db)), s.database(db));
          },
          py::arg("pred"), py::arg("gold"), py::arg("db_id"))
      .def(
          "train",
          [](const Session& s, const std::string& train_path, const std::string& dev_path, const std::string& config,
             const std::vector<std::string>& overrides) {
            const auto cfg = make_config(config, overrides);
            const auto tr = train::prepare_examples(eval::load_examples(train_path), s.corpus.schemas);
            const auto dev = dev_path.empty() ? std::vector<train::PreparedExample>{}
                                              : train::prepare_examples(eval::load_examples(dev_path), s.corpus.schemas);
            auto model = std::make_shared<train::Model>(train::make_model(cfg, train::build_vocabulary(tr)));
            train::TrainReport report;
            {
              py::gil_scoped_release release;
              report = train::train(*model, tr, dev);
            }
            return py::make_tuple(model, to_py(report.to_json()));
          },
          py::arg("train_path"), py::arg("dev_path") = "", py::arg("config") = "",
          py::arg("overrides") = std::vector<std::string>{})
      .def(
          "predict",
          [](const Session& s, const train::Model& model, const std::string& question, const std::string& db) {
            return train::predict(model, train::prepare_input(question, s.schema(db))).sql;
          },
          py::arg("model"), py::arg("question"), py::arg("db_id"))
      .def(
          "evaluate",
          [](const Session& s, const train::Model& model, const std::string& path, const std::string& mt) {
            const auto data = train::prepare_examples(eval::load_examples(path), s.corpus.schemas);
            auto ev = train::evaluate_dataset(model, data, metric(mt), s.corpus.databases);
            return to_py(ev.report.to_json());
          },
          py::arg("model"), py::arg("path"), py::arg("metric") = "exact");
}
