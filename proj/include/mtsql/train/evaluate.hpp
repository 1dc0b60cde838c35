#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtsql/eval/metrics.hpp"
#include "mtsql/train/model.hpp"

namespace mtsql::train {

struct ExampleResult {
  std::string id;
  std::string predicted_sql;
  eval::Hardness hardness = eval::Hardness::Easy;
  bool correct = false;
};

struct Evaluation {
  eval::EvalReport report;
  std::vector<ExampleResult> examples;
};

// Predicts every example (OTE-predicted triples drive the grammar rules),
// scores it with `metric` and aggregates per gold hardness. Execution needs a
// database for every db_id; a missing one counts as a failure.
Evaluation evaluate_dataset(const Model& m, const std::vector<PreparedExample>& data, eval::Metric metric,
                            const std::map<std::string, schema::Database>& databases = {});

}  // namespace mtsql::train
