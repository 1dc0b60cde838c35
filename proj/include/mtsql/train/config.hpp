#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mtsql/decoder/decoder.hpp"
#include "mtsql/encoder/encoder.hpp"
#include "mtsql/linking/linking.hpp"
#include "mtsql/ote/ote.hpp"

namespace mtsql::train {

struct TrainConfig {
  double lambda = 0.05;  // SLD loss weight
  double mu = 0.30;      // OTE loss weight
  std::size_t batch_size = 30;
  std::size_t epochs = 100;
  std::size_t patience = 10;          // epochs without held-out improvement
  std::size_t gold_link_epochs = 5;   // encoder sees gold links before this epoch
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  double tree_dropout = 0.5;  // on encoder states fed to the tree generator
  double rho = 0.995;         // link threshold
  std::size_t sld_hidden = 1024;
  linking::LinkWeighting link_weighting = linking::LinkWeighting::Balanced;
  bool use_sld = true;  // off: every candidate link reaches the encoder
  bool use_ote = true;  // off: no triples, no grammar constraints, no L_beta
  encoder::EncoderConfig encoder;
  ote::OteConfig ote;
  decoder::DecoderConfig decoder;

  void validate() const;
  bool operator==(const TrainConfig& o) const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> config_keys();
// Unknown keys throw ConfigError listing every valid key.
void set_config_value(TrainConfig& c, std::string_view key, std::string_view value);
std::string get_config_value(const TrainConfig& c, std::string_view key);

// "key = value" lines, '#' starts a comment. Later lines win.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);
// "key=value" form used by --set.
void apply_override(TrainConfig& c, std::string_view assignment);
// Every key, one per line, in config_keys() order; parse_config inverts it.
std::string format_config(const TrainConfig& c);

}  // namespace mtsql::train
