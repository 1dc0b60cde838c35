#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "mtsql/tensor/tensor.hpp"

namespace mtsql::tensor {

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  Constant,
  Matmul,
  Add,
  Sub,
  Mul,
  Scale,
  Softmax,
  LogSoftmax,
  LayerNorm,
  EmbeddingLookup,
  Concat,
  Relu,
  Sigmoid,
  Tanh,
  Dropout,
  CrossEntropy,
  BinaryCrossEntropy,
  Transpose,
  Slice,
  Sum,
  GatherCols,
  ScatterCols,
  Pick,
};

std::string_view op_name(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  NodeId id() const { return id_; }
  Graph& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

// Gradients keyed by node id of the requested parameters.
using GradientMap = std::map<NodeId, Tensor>;

class GradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tape-based computation graph. Nodes are appended in creation order, so the
// reverse of that order is a valid topological order for backward.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  OpKind kind(NodeId id) const { return nodes_[id].kind; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `delta` into the gradient buffer of `id` (used by backward closures).
  void accumulate(NodeId id, const Tensor& delta);
  Tensor& grad_buffer(NodeId id);

  GradientMap backward(const Var& loss, std::span<const NodeId> params);

  bool training = false;

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    bool requires_grad;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable addresses: value() references survive growth
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

// ---- operations ----------------------------------------------------------
// All operations work on rank-2 tensors ([rows, cols]); scalars are [1,1].

Var matmul(const Var& a, const Var& b);
// Elementwise with broadcasting of b when b is [1,n], [m,1] or [1,1].
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var softmax(const Var& a);      // row-wise
Var log_softmax(const Var& a);  // row-wise
Var layer_norm(const Var& a, double eps = 1e-5);  // row-wise, no affine
Var embedding_lookup(const Var& table, std::span<const std::size_t> indices);
Var concat(std::span<const Var> parts, int axis);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
// Inverted dropout; identity when !graph.training or keep_prob == 1.
Var dropout(const Var& a, double keep_prob, std::uint64_t seed);
// Sum over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
// Sum_i -w_i [y_i log p_i + (1 - y_i) log(1 - p_i)], p clamped to [1e-12, 1-1e-12].
Var binary_cross_entropy(const Var& probs, std::span<const double> labels,
                         std::span<const double> weights);
Var transpose(const Var& a);
Var slice(const Var& a, int axis, std::size_t begin, std::size_t end);
Var sum(const Var& a);
// out[i][j] = a[i][index[i*m + j]] for an [n, m] index grid.
Var gather_cols(const Var& a, std::span<const std::size_t> index, std::size_t m);
// out[i][index[i*m + j]] += a[i][j]; out has `width` columns.
Var scatter_cols(const Var& a, std::span<const std::size_t> index, std::size_t width);
// Flat element gather into a [1, N] row.
Var pick(const Var& a, std::span<const std::size_t> flat_indices);

// Generic dispatcher over the op kinds with a uniform attribute bag; used by
// the gradient suite and the bindings.
struct OpAttrs {
  double scalar = 1.0;
  int axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> indices;
  std::vector<double> labels;
  std::vector<double> weights;
};
Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

}  // namespace mtsql::tensor
