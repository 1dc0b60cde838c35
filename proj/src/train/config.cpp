#include "mtsql/train/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mtsql::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config: " + std::string(key) + " expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: " + std::string(key) + " expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + std::string(key) + " expects true or false, got '" + std::string(v) + "'");
}

struct Entry {
  std::string key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Entry real(std::string key, T TrainConfig::*outer, double T::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*outer.*field = to_double(key, v); },
          [=](const TrainConfig& c) { return fmt_double(c.*outer.*field); }};
}
template <class T>
Entry count(std::string key, T TrainConfig::*outer, std::size_t T::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*outer.*field = to_uint(key, v); },
          [=](const TrainConfig& c) { return std::to_string(c.*outer.*field); }};
}
template <class T>
Entry flag(std::string key, T TrainConfig::*outer, bool T::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*outer.*field = to_bool(key, v); },
          [=](const TrainConfig& c) { return std::string(c.*outer.*field ? "true" : "false"); }};
}
Entry real(std::string key, double TrainConfig::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*field = to_double(key, v); },
          [=](const TrainConfig& c) { return fmt_double(c.*field); }};
}
template <class U>
Entry count(std::string key, U TrainConfig::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*field = static_cast<U>(to_uint(key, v)); },
          [=](const TrainConfig& c) { return std::to_string(c.*field); }};
}
Entry flag(std::string key, bool TrainConfig::*field) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*field = to_bool(key, v); },
          [=](const TrainConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

const std::vector<Entry>& registry() {
  using TC = TrainConfig;
  static const std::vector<Entry> entries = {
      real("lambda", &TC::lambda),
      real("mu", &TC::mu),
      count("batch_size", &TC::batch_size),
      count("epochs", &TC::epochs),
      count("patience", &TC::patience),
      count("gold_link_epochs", &TC::gold_link_epochs),
      count("seed", &TC::seed),
      real("learning_rate", &TC::learning_rate),
      real("tree_dropout", &TC::tree_dropout),
      real("rho", &TC::rho),
      count("sld_hidden", &TC::sld_hidden),
      {"link_weighting",
       [](TC& c, std::string_view v) {
         if (v == "balanced") c.link_weighting = linking::LinkWeighting::Balanced;
         else if (v == "uniform") c.link_weighting = linking::LinkWeighting::Uniform;
         else throw ConfigError("config: link_weighting expects balanced or uniform, got '" + std::string(v) + "'");
       },
       [](const TC& c) {
         return std::string(c.link_weighting == linking::LinkWeighting::Balanced ? "balanced" : "uniform");
       }},
      flag("use_sld", &TC::use_sld),
      flag("use_ote", &TC::use_ote),
      count("encoder.layers", &TC::encoder, &encoder::EncoderConfig::layers),
      count("encoder.heads", &TC::encoder, &encoder::EncoderConfig::heads),
      count("encoder.d_emb", &TC::encoder, &encoder::EncoderConfig::d_emb),
      real("encoder.dropout", &TC::encoder, &encoder::EncoderConfig::dropout),
      flag("encoder.relation_values", &TC::encoder, &encoder::EncoderConfig::relation_values),
      count("ote.slots", &TC::ote, &ote::OteConfig::slots),
      count("ote.layers", &TC::ote, &ote::OteConfig::layers),
      count("ote.heads", &TC::ote, &ote::OteConfig::heads),
      real("ote.dropout", &TC::ote, &ote::OteConfig::dropout),
      count("decoder.beam", &TC::decoder, &decoder::DecoderConfig::beam),
      count("decoder.max_height", &TC::decoder, &decoder::DecoderConfig::max_height),
      count("decoder.scorer_layers", &TC::decoder, &decoder::DecoderConfig::scorer_layers),
      count("decoder.rank", &TC::decoder, &decoder::DecoderConfig::rank),
      count("decoder.max_span", &TC::decoder, &decoder::DecoderConfig::max_span),
      real("decoder.boost", &TC::decoder, &decoder::DecoderConfig::boost),
      flag("decoder.rule1", &TC::decoder, &decoder::DecoderConfig::rule1),
      flag("decoder.rule2", &TC::decoder, &decoder::DecoderConfig::rule2),
      flag("decoder.rule3", &TC::decoder, &decoder::DecoderConfig::rule3),
  };
  return entries;
}

const Entry& lookup(std::string_view key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  std::string msg = "config: unknown key '" + std::string(key) + "'; valid keys:";
  for (const auto& e : registry()) msg += " " + e.key;
  throw ConfigError(msg);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !(mu >= 0.0)) throw ConfigError("config: lambda and mu must be >= 0");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
  if (!(tree_dropout >= 0.0 && tree_dropout < 1.0)) throw ConfigError("config: tree_dropout must be in [0, 1)");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("config: rho must be in [0, 1]");
  if (sld_hidden < 1) throw ConfigError("config: sld_hidden must be >= 1");
  if (ote.slots < 1 || ote.heads < 1 || encoder.d_emb % ote.heads != 0) {
    throw ConfigError("config: ote.slots >= 1 and encoder.d_emb divisible by ote.heads required");
  }
  if (!(ote.dropout >= 0.0 && ote.dropout < 1.0)) throw ConfigError("config: ote.dropout must be in [0, 1)");
  try {
    encoder.validate();
    decoder.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

bool TrainConfig::operator==(const TrainConfig& o) const { return format_config(*this) == format_config(o); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

void set_config_value(TrainConfig& c, std::string_view key, std::string_view value) {
  lookup(key).set(c, trim(value));
}

std::string get_config_value(const TrainConfig& c, std::string_view key) { return lookup(key).get(c); }

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value': " + t);
    }
    set_config_value(base, trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_override(TrainConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("config: override '" + std::string(assignment) + "' is not key=value");
  set_config_value(c, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string format_config(const TrainConfig& c) {
  std::string out;
  for (const auto& e : registry()) out += e.key + " = " + e.get(c) + "\n";
  return out;
}

}  // namespace mtsql::train
