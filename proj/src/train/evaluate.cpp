#include "mtsql/train/evaluate.hpp"

namespace mtsql::train {

Evaluation evaluate_dataset(const Model& m, const std::vector<PreparedExample>& data, eval::Metric metric,
                            const std::map<std::string, schema::Database>& databases) {
  Evaluation out;
  out.report.metric = metric;
  for (const auto& ex : data) {
    const Prediction p = predict(m, ex.input);
    ExampleResult r{ex.id, p.sql, eval::hardness(*ex.gold), false};
    if (p.query) {
      if (metric == eval::Metric::ExactSetMatch) {
        r.correct = eval::exact_set_match(*p.query, *ex.gold);
      } else if (auto db = databases.find(ex.source.db_id); db != databases.end()) {
        r.correct = eval::execution_accuracy(*p.query, *ex.gold, db->second);
      }
    }
    out.report.add(r.hardness, r.correct);
    out.examples.push_back(std::move(r));
  }
  return out;
}

}  // namespace mtsql::train
