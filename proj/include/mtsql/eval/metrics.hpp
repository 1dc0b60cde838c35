#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "mtsql/eval/executor.hpp"
#include "mtsql/sql/ast.hpp"

namespace mtsql::eval {

bool exact_set_match(const sql::Query& pred, const sql::Query& gold);

// Both must execute; results compared as lists only when both carry ORDER BY.
// Parse or execution failure of the prediction counts as false.
bool execution_accuracy(const sql::Query& pred, const sql::Query& gold, const schema::Database& db);
bool execution_accuracy(std::string_view pred_sql, const sql::Query& gold, const schema::Database& db);

enum class Hardness { Easy, Medium, Hard, Extra };
inline constexpr std::size_t kHardnessLevels = 4;

std::string_view hardness_name(Hardness h);

// Spider's component-counting rules, including their quirks (negated
// conditions count as aggregations, HAVING connectives too).
Hardness hardness(const sql::Query& q);

struct HardnessCounts {
  int component1 = 0, component2 = 0, others = 0;
};
HardnessCounts hardness_components(const sql::Query& q);

enum class Metric { ExactSetMatch, Execution };
std::string_view metric_name(Metric m);

struct EvalReport {
  Metric metric = Metric::ExactSetMatch;
  std::array<int, kHardnessLevels> count{};
  std::array<int, kHardnessLevels> correct{};

  void add(Hardness h, bool ok);
  int total() const;
  int total_correct() const;
  double accuracy(Hardness h) const;
  double accuracy() const;

  nlohmann::json to_json() const;
  // Aligned table: one header row, then count and accuracy rows.
  std::string to_table() const;
  bool operator==(const EvalReport&) const = default;
};

}  // namespace mtsql::eval
