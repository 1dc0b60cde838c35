#include "mtsql/eval/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mtsql/linking/text.hpp"
#include "mtsql/sql/ast.hpp"

namespace mtsql::eval {

using nlohmann::json;

std::vector<Example> load_examples(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Example> out;
  for (const auto& e : json::parse(f)) {
    out.push_back({e.at("db_id").get<std::string>(), e.at("question").get<std::string>(),
                   e.at("query").get<std::string>()});
  }
  return out;
}

void save_examples(const std::vector<Example>& examples, const std::string& path) {
  json doc = json::array();
  for (const auto& e : examples) doc.push_back({{"db_id", e.db_id}, {"question", e.question}, {"query", e.query}});
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write dataset: " + path);
  f << doc.dump(1) << "\n";
}

SchemaIndex index_schemas(std::vector<schema::SchemaGraph> schemas) {
  SchemaIndex out;
  for (auto& s : schemas) {
    const std::string id = s.db_id;
    out.emplace(id, std::move(s));
  }
  return out;
}

Corpus load_corpus(const std::string& tables_path, const std::string& content_dir) {
  Corpus c;
  c.schemas = index_schemas(schema::load_schemas(tables_path));
  if (content_dir.empty()) return c;
  for (auto& [id, s] : c.schemas) {
    const std::string path = content_dir + "/" + id + ".json";
    if (!std::ifstream(path)) continue;
    auto db = schema::load_database_file(path, s);
    schema::attach_values(s, db);
    db.schema = &s;
    c.databases.emplace(id, std::move(db));
  }
  return c;
}

std::vector<Example> build_join_subset(const std::vector<Example>& examples, const SchemaIndex& schemas,
                                       SubsetReport* report) {
  SubsetReport r;
  std::vector<Example> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : examples) {
    ++r.input;
    auto s = schemas.find(e.db_id);
    if (s == schemas.end()) {
      ++r.unknown_db;
      continue;
    }
    sql::QueryPtr q;
    try {
      q = sql::parse_sql(e.query, s->second);
    } catch (const sql::ParseError& err) {
      std::cerr << "warning: skipping unparsable query (" << e.db_id << "): " << err.what() << "\n";
      ++r.unparsable;
      continue;
    }
    if (!sql::has_join(*q)) continue;
    auto key = std::make_pair(linking::join_words(linking::tokenize(e.question)), e.db_id + "|" + sql::to_sql(*q, s->second));
    if (!seen.insert(key).second) {
      ++r.duplicates;
      continue;
    }
    out.push_back(e);
  }
  r.kept = static_cast<int>(out.size());
  if (report) *report = r;
  return out;
}

namespace {

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) || c == '"'; };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(s[i])) ++i;
  return s.substr(i);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

schema::SchemaGraph load_text2sql_schema(const std::string& csv_path, const std::string& db_id) {
  std::ifstream f(csv_path);
  if (!f) throw schema::SchemaError("cannot open schema csv: " + csv_path);
  std::string line;
  std::getline(f, line);
  json entry;
  entry["db_id"] = db_id;
  entry["table_names_original"] = json::array();
  entry["table_names"] = json::array();
  entry["column_names_original"] = json::array({json::array({-1, "*"})});
  entry["column_names"] = json::array({json::array({-1, "*"})});
  entry["column_types"] = json::array({"text"});
  entry["primary_keys"] = json::array();
  entry["foreign_keys"] = json::array();
  std::map<std::string, int> table_ids;
  int column = 0;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() < 5) throw schema::SchemaError(csv_path + ": short row '" + line + "'");
    if (cells[0] == "-") continue;  // text2sql-data marks the catch-all row this way
    auto [it, fresh] = table_ids.emplace(lower(cells[0]), static_cast<int>(table_ids.size()));
    if (fresh) {
      entry["table_names_original"].push_back(cells[0]);
      entry["table_names"].push_back(lower(cells[0]));
    }
    ++column;
    entry["column_names_original"].push_back(json::array({it->second, cells[1]}));
    entry["column_names"].push_back(json::array({it->second, lower(cells[1])}));
    const std::string type = lower(cells[4]);
    const bool number = type.find("int") != std::string::npos || type.find("float") != std::string::npos ||
                        type.find("double") != std::string::npos || type.find("decimal") != std::string::npos ||
                        type.find("number") != std::string::npos || type.find("real") != std::string::npos;
    entry["column_types"].push_back(number ? "number" : (type.find("date") != std::string::npos ? "time" : "text"));
    if (lower(cells[2]) == "y" || lower(cells[2]) == "yes" || lower(cells[2]) == "true") entry["primary_keys"].push_back(column);
  }
  return schema::load_schema(entry);
}

std::vector<Example> load_text2sql(const std::string& json_path, const std::string& db_id, bool first_sql_only) {
  std::ifstream f(json_path);
  if (!f) throw std::runtime_error("cannot open text2sql file: " + json_path);
  std::vector<Example> out;
  for (const auto& entry : json::parse(f)) {
    std::map<std::string, std::string> defaults;
    const json decls = entry.value("variables", json::array());
    for (const auto& v : decls)
      defaults[v.at("name").get<std::string>()] = v.value("example", std::string());
    std::vector<std::string> queries;
    for (const auto& s : entry.at("sql")) {
      queries.push_back(s.get<std::string>());
      if (first_sql_only) break;
    }
    for (const auto& sent : entry.at("sentences")) {
      auto values = defaults;
      const json vars = sent.value("variables", json::object());
      for (const auto& [k, v] : vars.items()) values[k] = v.get<std::string>();
      // Longest names first so "name10" is not clobbered by "name1".
      std::vector<std::pair<std::string, std::string>> ordered(values.begin(), values.end());
      std::stable_sort(ordered.begin(), ordered.end(),
                       [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
      std::string question = sent.at("text").get<std::string>();
      for (const auto& [k, v] : ordered) question = replace_all(question, k, v);
      for (std::string q : queries) {
        for (const auto& [k, v] : ordered) q = replace_all(q, k, v);
        out.push_back({db_id, question, q});
      }
    }
  }
  return out;
}

}  // namespace mtsql::eval
