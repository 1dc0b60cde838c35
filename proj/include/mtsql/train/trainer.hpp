#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsql/train/model.hpp"

namespace mtsql::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// L2 norms of each loss's gradient restricted to the shared encoder.
struct GradientNorms {
  double delta = 0.0, alpha = 0.0, beta = 0.0;
};

GradientNorms encoder_gradient_norms(const Model& m, const PreparedExample& ex, LinkSource links);

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0, delta = 0.0, alpha = 0.0, beta = 0.0;  // means over examples
  double held_out_esm = -1.0;  // -1 without a held-out set
  std::size_t fallbacks = 0;   // decoder fallback events on the held-out set
  std::size_t unreachable_leaves = 0;
  GradientNorms norms;  // on the first example of the epoch where all three losses are active
  LinkSource links = LinkSource::Gold;

  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  std::size_t best_epoch = 0;
  double best_esm = -1.0;
  bool stopped_early = false;

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(Model& model);

  // One pass in seeded shuffled order, one Adam step per mini-batch on the
  // batch-mean gradient. Held-out ESM is left at -1.
  EpochReport train_epoch(const std::vector<PreparedExample>& data);
  std::size_t epochs_done() const { return epoch_; }

 private:
  Model* model_;
  tensor::OptimizerState opt_;
  std::size_t epoch_ = 0;
};

struct HeldOut {
  double esm = 0.0;
  std::size_t fallbacks = 0;
};
HeldOut held_out_esm(const Model& m, const std::vector<PreparedExample>& data);

// Runs config.epochs epochs with early stopping on held-out exact-set-match
// (when `held_out` is non-empty); the best parameters are restored at the end.
TrainReport train(Model& model, const std::vector<PreparedExample>& data, const std::vector<PreparedExample>& held_out,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace mtsql::train
