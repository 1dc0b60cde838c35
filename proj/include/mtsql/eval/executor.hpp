#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mtsql/schema/database.hpp"
#include "mtsql/sql/ast.hpp"

namespace mtsql::eval {

using schema::Cell;

struct ResultTable {
  std::vector<std::vector<Cell>> rows;
};

class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nested-loop interpreter over an in-memory database. Bag semantics except
// where SQL prescribes set semantics (DISTINCT, UNION, INTERSECT, EXCEPT).
// NULL compares false in every predicate, negated ones included.
ResultTable execute(const sql::Query& q, const schema::Database& db);

// Comparison key of one cell: numbers via %.10g so float noise from AVG and
// division does not split equal results.
std::string cell_key(const Cell& c);

// Multiset equality, or list equality when `ordered`.
bool same_result(const ResultTable& a, const ResultTable& b, bool ordered);

}  // namespace mtsql::eval
