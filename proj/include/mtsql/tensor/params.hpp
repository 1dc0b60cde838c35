#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtsql/tensor/graph.hpp"

namespace mtsql::tensor {

using ParamId = std::size_t;

// Named, ordered collection of trainable tensors. Order of registration is
// the checkpoint manifest order.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor init);
  std::optional<ParamId> find(const std::string& name) const;

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  Tensor& value(ParamId id) { return values_[id]; }
  const Tensor& value(ParamId id) const { return values_[id]; }
  std::span<Tensor> values() { return values_; }
  std::span<const Tensor> values() const { return values_; }

  bool operator==(const ParameterStore&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Binds parameters into one graph as leaves, at most once each.
class Binding {
 public:
  Binding(Graph& graph, const ParameterStore& store)
      : graph_(&graph), store_(&store), nodes_(store.size()) {}

  Var operator()(ParamId id);
  Graph& graph() const { return *graph_; }

  // (parameter, node) pairs bound so far.
  std::vector<std::pair<ParamId, NodeId>> bound() const;

  // Per-parameter gradients of `loss`; unbound parameters receive zeros.
  std::vector<Tensor> gradients(const Var& loss) const;

 private:
  Graph* graph_;
  const ParameterStore* store_;
  std::vector<std::optional<NodeId>> nodes_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig hyper;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bias-corrected Adam step over `params`. Every parameter needs a gradient.
void adam_update(std::span<Tensor> params, std::span<const std::optional<Tensor>> grads,
                 OptimizerState& state);
void adam_update(ParameterStore& params, std::span<const Tensor> grads, OptimizerState& state);

// Checkpoint: "mtsql-checkpoint <version>\n", "<count>\n", one
// "<name>\t<d0>,<d1>,...\n" line per tensor, "payload\n", then the raw
// little-endian binary64 values of every tensor in manifest order.
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path);
std::string serialize_checkpoint(const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);
ParameterStore parse_checkpoint(std::string_view bytes);

// Central-difference gradient check. `build` must be deterministic (no active
// dropout); it receives the leaves bound to `params` in order. Returns the max
// over every entry of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;
double finite_difference_check(const LossBuilder& build, std::vector<Tensor> params, double eps);

}  // namespace mtsql::tensor
