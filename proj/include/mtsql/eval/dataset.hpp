#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtsql/schema/database.hpp"
#include "mtsql/schema/schema.hpp"

namespace mtsql::eval {

struct Example {
  std::string db_id;
  std::string question;
  std::string query;
  bool operator==(const Example&) const = default;
};

using SchemaIndex = std::map<std::string, schema::SchemaGraph>;

// Spider-style list of {db_id, question, query}.
std::vector<Example> load_examples(const std::string& path);
void save_examples(const std::vector<Example>& examples, const std::string& path);
SchemaIndex index_schemas(std::vector<schema::SchemaGraph> schemas);

// Schemas plus the databases found under a content directory
// ("<dir>/<db_id>.json"); cell values are attached to their schemas. Databases
// point into `schemas`, so a Corpus moves but does not copy.
struct Corpus {
  SchemaIndex schemas;
  std::map<std::string, schema::Database> databases;

  Corpus() = default;
  Corpus(Corpus&&) = default;
  Corpus& operator=(Corpus&&) = default;
  Corpus(const Corpus&) = delete;
  Corpus& operator=(const Corpus&) = delete;
};
Corpus load_corpus(const std::string& tables_path, const std::string& content_dir = "");

struct SubsetReport {
  int input = 0;
  int kept = 0;
  int unparsable = 0;
  int unknown_db = 0;
  int duplicates = 0;
};

// Keeps examples whose gold query joins at least two table units somewhere,
// deduplicated on (normalized question, normalized SQL) in input order.
std::vector<Example> build_join_subset(const std::vector<Example>& examples, const SchemaIndex& schemas,
                                       SubsetReport* report = nullptr);

// text2sql-data: "<name>-schema.csv" with header
// "Table Name, Field Name, Is Primary Key, Is Foreign Key, Type". Foreign key
// targets are not recorded in that format, so none are loaded.
schema::SchemaGraph load_text2sql_schema(const std::string& csv_path, const std::string& db_id);

// One example per (sentence, sql variant); placeholders in both the question
// and the SQL are replaced by the sentence's variable values, falling back to
// the "example" value of the variable declaration.
std::vector<Example> load_text2sql(const std::string& json_path, const std::string& db_id,
                                   bool first_sql_only = true);

}  // namespace mtsql::eval
