#include "mtsql/schema/schema.hpp"

#include <algorithm>
#include <fstream>

#include "mtsql/linking/text.hpp"

namespace mtsql::schema {

using nlohmann::json;

std::string_view column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Number: return "number";
    case ColumnType::Time: return "time";
    case ColumnType::Text: return "text";
  }
  return "text";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

ColumnType parse_type(const std::string& t) {
  const std::string l = lower(t);
  if (l == "number" || l == "boolean" || l == "int" || l == "real") return ColumnType::Number;
  if (l == "time" || l == "date" || l == "datetime") return ColumnType::Time;
  return ColumnType::Text;
}

const json& field(const json& entry, const char* key) {
  if (!entry.is_object() || !entry.contains(key)) {
    throw SchemaError(std::string("schema entry is missing field '") + key + "'");
  }
  return entry.at(key);
}

}  // namespace

std::optional<int> SchemaGraph::find_table(std::string_view name) const {
  const std::string l = lower(std::string(name));
  for (std::size_t i = 0; i < tables.size(); ++i)
    if (tables[i].name == l) return static_cast<int>(i);
  return std::nullopt;
}

std::optional<int> SchemaGraph::find_column(int table, std::string_view name) const {
  const std::string l = lower(std::string(name));
  for (int c : tables.at(table).columns)
    if (columns[c].name == l) return c;
  return std::nullopt;
}

std::string SchemaGraph::qualified(int column) const {
  const auto& c = columns.at(column);
  return tables.at(c.table).name + "." + c.name;
}

bool SchemaGraph::has_values() const {
  return std::any_of(values.begin(), values.end(), [](const auto& v) { return !v.empty(); });
}

SchemaGraph load_schema(const json& entry) {
  SchemaGraph g;
  g.db_id = field(entry, "db_id").get<std::string>();
  const auto& tnames = field(entry, "table_names_original");
  const auto& cnames = field(entry, "column_names_original");
  const auto& ctypes = field(entry, "column_types");
  const auto& pks = field(entry, "primary_keys");
  const auto& fks = field(entry, "foreign_keys");
  const json* natural_t = entry.contains("table_names") ? &entry.at("table_names") : nullptr;
  const json* natural_c = entry.contains("column_names") ? &entry.at("column_names") : nullptr;

  if (tnames.empty()) throw SchemaError(g.db_id + ": schema has zero tables");
  if (ctypes.size() != cnames.size()) {
    throw SchemaError(g.db_id + ": column_types has " + std::to_string(ctypes.size()) +
                      " entries for " + std::to_string(cnames.size()) + " columns");
  }
  for (std::size_t t = 0; t < tnames.size(); ++t) {
    Table tab;
    tab.original = tnames[t].get<std::string>();
    tab.name = lower(tab.original);
    const std::string natural =
        natural_t && t < natural_t->size() ? (*natural_t)[t].get<std::string>() : tab.original;
    tab.words = linking::tokenize(natural);
    g.tables.push_back(std::move(tab));
  }
  // Spider index -> dense id (the "*" entry maps to -1).
  std::vector<int> remap(cnames.size(), -1);
  for (std::size_t i = 0; i < cnames.size(); ++i) {
    const auto& pair = cnames[i];
    if (!pair.is_array() || pair.size() != 2) {
      throw SchemaError(g.db_id + ": malformed column_names_original entry " + std::to_string(i));
    }
    const int t = pair[0].get<int>();
    const std::string name = pair[1].get<std::string>();
    if (t < 0) continue;
    if (t >= static_cast<int>(g.tables.size())) {
      throw SchemaError(g.db_id + ": column " + std::to_string(i) + " (" + name +
                        ") references missing table " + std::to_string(t));
    }
    Column col;
    col.original = name;
    col.name = lower(name);
    col.table = t;
    col.type = parse_type(ctypes[i].get<std::string>());
    const std::string natural = natural_c && i < natural_c->size() && (*natural_c)[i].is_array()
                                    ? (*natural_c)[i][1].get<std::string>()
                                    : name;
    col.words = linking::tokenize(natural);
    remap[i] = static_cast<int>(g.columns.size());
    g.tables[t].columns.push_back(remap[i]);
    g.columns.push_back(std::move(col));
  }
  auto resolve = [&](const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw SchemaError(g.db_id + ": non-integer " + what);
    const auto k = v.get<long long>();
    if (k < 0 || k >= static_cast<long long>(remap.size()) || remap[k] < 0) {
      throw SchemaError(g.db_id + ": " + what + " references column index " + std::to_string(k) +
                        " which does not exist");
    }
    return remap[k];
  };
  for (const auto& pk : pks) {
    // Composite keys appear as nested arrays in some releases.
    if (pk.is_array()) {
      for (const auto& k : pk) g.primary_keys.insert(resolve(k, "primary key"));
    } else {
      g.primary_keys.insert(resolve(pk, "primary key"));
    }
  }
  for (const auto& fk : fks) {
    if (!fk.is_array() || fk.size() != 2) throw SchemaError(g.db_id + ": malformed foreign key entry");
    const int a = resolve(fk[0], "foreign key");
    const int b = resolve(fk[1], "foreign key");
    if (a == b) throw SchemaError(g.db_id + ": foreign key on column " + g.qualified(a) + " references itself");
    g.foreign_keys.emplace(a, b);
  }
  g.values.assign(g.columns.size(), {});
  return g;
}

json to_spider_json(const SchemaGraph& g) {
  json out;
  out["db_id"] = g.db_id;
  json tn = json::array(), tno = json::array(), cn = json::array(), cno = json::array(),
       ct = json::array();
  for (const auto& t : g.tables) {
    tn.push_back(linking::join_words(t.words));
    tno.push_back(t.original);
  }
  cn.push_back(json::array({-1, "*"}));
  cno.push_back(json::array({-1, "*"}));
  ct.push_back("text");
  for (const auto& c : g.columns) {
    cn.push_back(json::array({c.table, linking::join_words(c.words)}));
    cno.push_back(json::array({c.table, c.original}));
    ct.push_back(std::string(column_type_name(c.type)));
  }
  out["table_names"] = tn;
  out["table_names_original"] = tno;
  out["column_names"] = cn;
  out["column_names_original"] = cno;
  out["column_types"] = ct;
  json pk = json::array();
  for (int k : g.primary_keys) pk.push_back(k + 1);
  out["primary_keys"] = pk;
  json fk = json::array();
  for (auto [a, b] : g.foreign_keys) fk.push_back(json::array({a + 1, b + 1}));
  out["foreign_keys"] = fk;
  return out;
}

std::vector<SchemaGraph> load_schemas(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw SchemaError("cannot open schema file: " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw SchemaError("malformed JSON in " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw SchemaError(path + ": expected a JSON array of schemas");
  std::vector<SchemaGraph> out;
  for (const auto& e : doc) out.push_back(load_schema(e));
  return out;
}

}  // namespace mtsql::schema
