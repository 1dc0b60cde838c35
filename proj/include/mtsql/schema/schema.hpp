#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace mtsql::schema {

enum class ColumnType : std::uint8_t { Number, Time, Text };

std::string_view column_type_name(ColumnType t);

struct Table {
  std::string name;      // lowercased
  std::string original;  // casing as in the schema file
  std::vector<std::string> words;
  std::vector<int> columns;
  bool operator==(const Table&) const = default;
};

struct Column {
  std::string name;
  std::string original;
  std::vector<std::string> words;
  int table = -1;
  ColumnType type = ColumnType::Text;
  bool operator==(const Column&) const = default;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tables and columns of one database. Column ids are dense and exclude the
// Spider "*" pseudo-column; "*" is handled as a constant by the decoder.
struct SchemaGraph {
  std::string db_id;
  std::vector<Table> tables;
  std::vector<Column> columns;
  std::set<int> primary_keys;
  std::set<std::pair<int, int>> foreign_keys;  // (source column, referenced column)
  // Distinct string renderings per column; empty when no content is attached.
  std::vector<std::vector<std::string>> values;

  std::optional<int> find_table(std::string_view name) const;
  std::optional<int> find_column(int table, std::string_view name) const;
  std::string qualified(int column) const;  // "table.column"
  bool has_values() const;

  bool operator==(const SchemaGraph&) const = default;
};

// One entry of a Spider tables file.
SchemaGraph load_schema(const nlohmann::json& entry);
nlohmann::json to_spider_json(const SchemaGraph& schema);

// Whole tables file keyed by db_id in file order.
std::vector<SchemaGraph> load_schemas(const std::string& path);

}  // namespace mtsql::schema
