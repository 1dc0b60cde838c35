#include "mtsql/schema/database.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mtsql::schema {

using nlohmann::json;

std::string render_cell(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "null";
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  const double d = std::get<double>(c);
  if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 1e15) {
    return std::to_string(static_cast<long long>(d));
  }
  std::ostringstream os;
  os.precision(15);
  os << d;
  return os.str();
}

namespace {

Cell to_cell(const json& v, ColumnType type) {
  if (v.is_null()) return std::monostate{};
  if (v.is_number()) return v.get<double>();
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (type == ColumnType::Number) {
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (!s.empty() && end == s.c_str() + s.size()) return d;
  }
  return s;
}

}  // namespace

Database load_database(const json& doc, const SchemaGraph& schema) {
  Database db;
  db.schema = &schema;
  db.rows.assign(schema.tables.size(), {});
  if (!doc.contains("tables") || !doc.at("tables").is_object()) {
    throw SchemaError(schema.db_id + ": content file lacks a 'tables' object");
  }
  for (const auto& [name, rows] : doc.at("tables").items()) {
    auto t = schema.find_table(name);
    if (!t) throw SchemaError(schema.db_id + ": content for unknown table '" + name + "'");
    const auto& cols = schema.tables[*t].columns;
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != cols.size()) {
        throw SchemaError(schema.db_id + ": row of table '" + name + "' has " +
                          std::to_string(row.size()) + " cells, expected " +
                          std::to_string(cols.size()));
      }
      std::vector<Cell> cells;
      for (std::size_t i = 0; i < cols.size(); ++i) cells.push_back(to_cell(row[i], schema.columns[cols[i]].type));
      db.rows[*t].push_back(std::move(cells));
    }
  }
  return db;
}

Database load_database_file(const std::string& path, const SchemaGraph& schema) {
  std::ifstream f(path);
  if (!f) throw SchemaError("cannot open content file: " + path);
  return load_database(json::parse(f), schema);
}

void attach_values(SchemaGraph& schema, const Database& db) {
  schema.values.assign(schema.columns.size(), {});
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    const auto& cols = schema.tables[t].columns;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      std::set<std::string> seen;
      for (const auto& row : db.rows[t]) {
        if (std::holds_alternative<std::monostate>(row[i])) continue;
        std::string r = render_cell(row[i]);
        if (seen.insert(r).second) schema.values[cols[i]].push_back(std::move(r));
      }
    }
  }
}

}  // namespace mtsql::schema
