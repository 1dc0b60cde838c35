#pragma once

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsql/schema/schema.hpp"

namespace mtsql::schema {

// NULL, number, or text (times are stored as text).
using Cell = std::variant<std::monostate, double, std::string>;

std::string render_cell(const Cell& c);  // integers without a fractional part

struct Database {
  const SchemaGraph* schema = nullptr;
  std::vector<std::vector<std::vector<Cell>>> rows;  // [table][row][column-in-table]
};

// Content file: {"db_id": ..., "tables": {"<table>": [[cell, ...], ...]}}.
// Row arity must equal the table's column count.
Database load_database(const nlohmann::json& doc, const SchemaGraph& schema);
Database load_database_file(const std::string& path, const SchemaGraph& schema);

// Fills schema.values with the distinct renderings of each column.
void attach_values(SchemaGraph& schema, const Database& db);

}  // namespace mtsql::schema
