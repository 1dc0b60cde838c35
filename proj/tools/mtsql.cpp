// mtsql command-line entry point: preprocess, train, predict, evaluate,
// build-join-subset, gridsearch. Every artifact-writing command also writes
// manifest.json next to its outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "mtsql/eval/dataset.hpp"
#include "mtsql/train/evaluate.hpp"
#include "mtsql/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace mtsql;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative paths that do not exist are retried under $MTSQL_DATA_DIR.
std::string resolve(const std::string& path) {
  if (path.empty()) return path;
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("MTSQL_DATA_DIR"); root && fs::path(path).is_relative()) {
    fs::path p = fs::path(root) / path;
    if (fs::exists(p)) return p.string();
  }
  throw UsageError("missing file: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("missing file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

std::string file_hash(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += fs::relative(f, path).string() + " " + sha256(read_file(f.string())) + "\n";
    return sha256(all);
  }
  return sha256(read_file(path));
}

struct Common {
  std::string config_path, out = "out", tables = "tables.json", content = "content";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value config file");
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--set", c.overrides, "key=value override, repeatable");
  app->add_option("--tables", c.tables, "schema file (tables.json)");
  app->add_option("--content", c.content, "directory of <db_id>.json database contents");
}

train::TrainConfig effective_config(const Common& c) {
  train::TrainConfig cfg = c.config_path.empty() ? train::TrainConfig{} : train::load_config(resolve(c.config_path));
  for (const auto& o : c.overrides) train::apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

eval::Corpus corpus(const Common& c) {
  std::string content;
  try {
    content = resolve(c.content);
  } catch (const UsageError&) {
    content.clear();  // contents are optional
  }
  return eval::load_corpus(resolve(c.tables), content);
}

class Manifest {
 public:
  Manifest(std::string command, const Common& c) : command_(std::move(command)), out_(c.out) {
    fs::create_directories(out_);
  }
  void config(const train::TrainConfig& cfg) {
    config_ = train::format_config(cfg);
    seed_ = cfg.seed;
  }
  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = file_hash(path);
  }
  void output(const std::string& name, const std::string& bytes) {
    write_file(out_ / name, bytes);
    outputs_[name] = sha256(bytes);
  }
  void write() const {
    nlohmann::json j{{"command", command_},
                     {"versions", {{"mtsql", kVersion},
                                   {"model_format", train::kModelVersion},
                                   {"checkpoint_format", tensor::kCheckpointVersion}}},
                     {"inputs", inputs_},
                     {"outputs", outputs_}};
    if (!config_.empty()) {
      j["config"] = config_;
      j["seed"] = seed_;
    }
    write_file(out_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  std::string config_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> inputs_, outputs_;
};

std::vector<train::PreparedExample> prepared(const std::string& path, const eval::Corpus& c) {
  train::PrepareReport r;
  auto out = train::prepare_examples(eval::load_examples(path), c.schemas, &r);
  std::cerr << path << ": " << r.kept << "/" << r.input << " examples";
  if (r.unknown_db) std::cerr << ", " << r.unknown_db << " with unknown db";
  if (r.unparsable) std::cerr << ", " << r.unparsable << " unparsable";
  std::cerr << "\n";
  return out;
}

void print_epoch(const train::EpochReport& r) {
  std::cerr << "epoch " << r.epoch << "  L " << r.loss << "  Ld " << r.delta << "  La " << r.alpha << "  Lb " << r.beta;
  if (r.held_out_esm >= 0) std::cerr << "  esm " << r.held_out_esm << "  fallbacks " << r.fallbacks;
  std::cerr << "\n";
}

int cmd_preprocess(const Common& c, const std::string& input) {
  const auto cfg = effective_config(c);
  const auto corp = corpus(c);
  const std::string in = resolve(input);
  Manifest m("preprocess", c);
  m.config(cfg);
  m.input(resolve(c.tables));
  m.input(in);
  std::string lines;
  for (const auto& ex : prepared(in, corp)) lines += train::to_json(ex).dump() + "\n";
  m.output("examples.jsonl", lines);
  m.write();
  return 0;
}

train::Model fit(const train::TrainConfig& cfg, const std::vector<train::PreparedExample>& tr,
                 const std::vector<train::PreparedExample>& dev, train::TrainReport& report, bool verbose) {
  train::Model model = train::make_model(cfg, train::build_vocabulary(tr));
  report = train::train(model, tr, dev, verbose ? print_epoch : std::function<void(const train::EpochReport&)>{});
  return model;
}

int cmd_train(const Common& c, const std::string& train_path, const std::string& dev_path) {
  const auto cfg = effective_config(c);
  const auto corp = corpus(c);
  const std::string tp = resolve(train_path), dp = dev_path.empty() ? "" : resolve(dev_path);
  Manifest m("train", c);
  m.config(cfg);
  m.input(resolve(c.tables));
  m.input(tp);
  m.input(dp);
  const auto tr = prepared(tp, corp);
  const auto dev = dp.empty() ? std::vector<train::PreparedExample>{} : prepared(dp, corp);
  train::TrainReport report;
  const auto model = fit(cfg, tr, dev, report, true);
  m.output("model.bin", train::serialize_model(model));
  m.output("train_report.json", report.to_json().dump(2) + "\n");
  m.output("config.txt", train::format_config(cfg));
  m.write();
  return 0;
}

int cmd_predict(const Common& c, const std::string& model_path, const std::string& db, const std::string& question,
                const std::string& input) {
  const auto corp = corpus(c);
  const auto model = train::load_model(resolve(model_path));
  if (!question.empty()) {
    auto it = corp.schemas.find(db);
    if (it == corp.schemas.end()) throw UsageError("unknown db_id: " + db);
    std::cout << train::predict(model, train::prepare_input(question, it->second)).sql << "\n";
    return 0;
  }
  if (input.empty()) throw UsageError("predict needs --question with --db, or --input");
  Manifest m("predict", c);
  m.input(resolve(model_path));
  m.input(resolve(c.tables));
  m.input(resolve(input));
  std::string lines;
  for (const auto& e : eval::load_examples(resolve(input))) {
    auto it = corp.schemas.find(e.db_id);
    const std::string sql =
        it == corp.schemas.end() ? "" : train::predict(model, train::prepare_input(e.question, it->second)).sql;
    lines += sql + "\n";
  }
  std::cout << lines;
  m.output("predictions.sql", lines);
  m.write();
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& model_path, const std::string& input, const std::string& metric) {
  const auto corp = corpus(c);
  const auto model = train::load_model(resolve(model_path));
  eval::Metric mt;
  if (metric == "exact") mt = eval::Metric::ExactSetMatch;
  else if (metric == "exec") mt = eval::Metric::Execution;
  else throw UsageError("--metric must be exact or exec");
  Manifest m("evaluate", c);
  m.input(resolve(model_path));
  m.input(resolve(c.tables));
  m.input(resolve(input));
  const auto ev = train::evaluate_dataset(model, prepared(resolve(input), corp), mt, corp.databases);
  std::string preds;
  for (const auto& r : ev.examples) preds += r.predicted_sql + "\n";
  std::cout << ev.report.to_table();
  m.output("eval_report.json", ev.report.to_json().dump(2) + "\n");
  m.output("predictions.sql", preds);
  m.write();
  return 0;
}

int cmd_join_subset(const Common& c, const std::vector<std::string>& inputs, const std::string& t2s_json,
                    const std::string& t2s_schema, const std::string& t2s_db) {
  auto corp = corpus(c);
  Manifest m("build-join-subset", c);
  m.input(resolve(c.tables));
  std::vector<eval::Example> all;
  for (const auto& in : inputs) {
    const std::string p = resolve(in);
    m.input(p);
    auto ex = eval::load_examples(p);
    all.insert(all.end(), ex.begin(), ex.end());
  }
  if (!t2s_json.empty()) {
    if (t2s_schema.empty() || t2s_db.empty()) throw UsageError("--text2sql needs --text2sql-schema and --text2sql-db");
    m.input(resolve(t2s_json));
    m.input(resolve(t2s_schema));
    corp.schemas[t2s_db] = eval::load_text2sql_schema(resolve(t2s_schema), t2s_db);
    auto ex = eval::load_text2sql(resolve(t2s_json), t2s_db);
    all.insert(all.end(), ex.begin(), ex.end());
  }
  eval::SubsetReport r;
  const auto subset = eval::build_join_subset(all, corp.schemas, &r);
  eval::EvalReport levels;
  for (const auto& e : subset) levels.add(eval::hardness(*sql::parse_sql(e.query, corp.schemas.at(e.db_id))), true);
  std::cout << "kept " << r.kept << " of " << r.input << " (unparsable " << r.unparsable << ", unknown db "
            << r.unknown_db << ", duplicates " << r.duplicates << ")\n"
            << levels.to_table();
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : subset) out.push_back({{"db_id", e.db_id}, {"question", e.question}, {"query", e.query}});
  m.output("join_subset.json", out.dump(1) + "\n");
  m.write();
  return 0;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_gridsearch(const Common& c, const std::string& train_path, const std::string& dev_path,
                   const std::string& lambdas, const std::string& mus) {
  const auto base = effective_config(c);
  const auto corp = corpus(c);
  const std::string tp = resolve(train_path), dp = resolve(dev_path);
  Manifest m("gridsearch", c);
  m.config(base);
  m.input(resolve(c.tables));
  m.input(tp);
  m.input(dp);
  const auto tr = prepared(tp, corp);
  const auto dev = prepared(dp, corp);
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream table;
  table << std::left << std::setw(10) << "lambda" << std::setw(10) << "mu" << "held-out ESM\n";
  for (double l : parse_list(lambdas)) {
    for (double u : parse_list(mus)) {
      auto cfg = base;
      cfg.lambda = l;
      cfg.mu = u;
      train::TrainReport report;
      const auto model = fit(cfg, tr, dev, report, false);
      const auto ev = train::evaluate_dataset(model, dev, eval::Metric::ExactSetMatch);
      rows.push_back({{"lambda", l}, {"mu", u}, {"esm", ev.report.accuracy()}, {"best_epoch", report.best_epoch}});
      table << std::setw(10) << l << std::setw(10) << u << std::fixed << std::setprecision(3) << ev.report.accuracy()
            << std::defaultfloat << "\n";
      std::cerr << "lambda " << l << " mu " << u << " esm " << ev.report.accuracy() << "\n";
    }
  }
  std::cout << table.str();
  m.output("grid.json", rows.dump(2) + "\n");
  m.write();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtsql: multi-task text-to-SQL"};
  app.require_subcommand(1);
  Common common;
  std::string input, train_path, dev_path, model_path, db, question, metric = "exact", lambdas = "0,0.05,0.1,0.3",
                                                                          mus = "0,0.05,0.1,0.3";
  std::vector<std::string> inputs;
  std::string t2s_json, t2s_schema, t2s_db;

  auto* pre = app.add_subcommand("preprocess", "serialize examples with sequences, relations and gold labels");
  add_common(pre, common);
  pre->add_option("--input", input, "examples JSON")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr, common);
  tr->add_option("--train", train_path, "training examples JSON")->required();
  tr->add_option("--dev", dev_path, "held-out examples JSON (early stopping)");

  auto* pr = app.add_subcommand("predict", "print SQL for one question or a file of examples");
  add_common(pr, common);
  pr->add_option("--model", model_path, "model file")->required();
  pr->add_option("--db", db, "db_id for --question");
  pr->add_option("--question", question, "question text");
  pr->add_option("--input", input, "examples JSON");

  auto* ev = app.add_subcommand("evaluate", "per-hardness accuracy report");
  add_common(ev, common);
  ev->add_option("--model", model_path, "model file")->required();
  ev->add_option("--input", input, "examples JSON")->required();
  ev->add_option("--metric", metric, "exact or exec");

  auto* js = app.add_subcommand("build-join-subset", "keep examples whose gold SQL joins tables");
  add_common(js, common);
  js->add_option("--input", inputs, "Spider-format examples JSON, repeatable");
  js->add_option("--text2sql", t2s_json, "text2sql-data JSON");
  js->add_option("--text2sql-schema", t2s_schema, "text2sql-data schema CSV");
  js->add_option("--text2sql-db", t2s_db, "db_id given to the text2sql-data schema");

  auto* gs = app.add_subcommand("gridsearch", "train over a (lambda, mu) grid");
  add_common(gs, common);
  gs->add_option("--train", train_path, "training examples JSON")->required();
  gs->add_option("--dev", dev_path, "held-out examples JSON")->required();
  gs->add_option("--lambdas", lambdas, "comma-separated lambda values");
  gs->add_option("--mus", mus, "comma-separated mu values");

  CLI11_PARSE(app, argc, argv);
  try {
    if (pre->parsed()) return cmd_preprocess(common, input);
    if (tr->parsed()) return cmd_train(common, train_path, dev_path);
    if (pr->parsed()) return cmd_predict(common, model_path, db, question, input);
    if (ev->parsed()) return cmd_evaluate(common, model_path, input, metric);
    if (js->parsed()) return cmd_join_subset(common, inputs, t2s_json, t2s_schema, t2s_db);
    if (gs->parsed()) return cmd_gridsearch(common, train_path, dev_path, lambdas, mus);
  } catch (const std::exception& e) {
    std::cerr << "mtsql: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
