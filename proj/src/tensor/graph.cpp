#include "mtsql/tensor/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtsql::tensor {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log-softmax";
    case OpKind::LayerNorm: return "layer-norm";
    case OpKind::EmbeddingLookup: return "embedding-lookup";
    case OpKind::Concat: return "concat";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Dropout: return "dropout";
    case OpKind::CrossEntropy: return "cross-entropy";
    case OpKind::BinaryCrossEntropy: return "binary-cross-entropy";
    case OpKind::Transpose: return "transpose";
    case OpKind::Slice: return "slice";
    case OpKind::Sum: return "sum";
    case OpKind::GatherCols: return "gather-cols";
    case OpKind::ScatterCols: return "scatter-cols";
    case OpKind::Pick: return "pick";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back({OpKind::Constant, std::move(value), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back({OpKind::Leaf, std::move(value), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, Tensor value, std::span<const Var> inputs,
                  BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || requires_grad(in.id());
  nodes_.push_back({kind, std::move(value), needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(NodeId id) {
  if (!has_grad_[id]) {
    grads_[id] = Tensor(nodes_[id].value.shape(), 0.0);
    has_grad_[id] = true;
  }
  return grads_[id];
}

void Graph::accumulate(NodeId id, const Tensor& delta) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id) += delta;
}

GradientMap Graph::backward(const Var& loss, std::span<const NodeId> params) {
  if (loss.value().size() != 1) {
    throw GradientError("backward: loss must be scalar, got shape " +
                        shape_string(loss.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  grad_buffer(loss.id()).fill(1.0);
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!has_grad_[id] || !node.requires_grad || !node.backward) continue;
    // Copy: the closure may grow grads_ of earlier nodes but never this one.
    Tensor g = grads_[id];
    node.backward(*this, g);
  }
  GradientMap out;
  for (NodeId p : params) {
    if (p >= nodes_.size()) throw GradientError("backward: unknown parameter node");
    out[p] = has_grad_[p] ? grads_[p] : Tensor(nodes_[p].value.shape(), 0.0);
  }
  grads_.clear();
  has_grad_.clear();
  return out;
}

namespace {

[[noreturn]] void mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a) +
                   " vs " + shape_string(b));
}

void require_rank2(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op_name(kind)) + ": expected rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_mode(OpKind kind, const Tensor& a, const Tensor& b) {
  require_rank2(kind, a);
  require_rank2(kind, b);
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  mismatch(kind, a.shape(), b.shape());
}

inline std::size_t bindex(Broadcast mode, std::size_t r, std::size_t c, std::size_t cols) {
  switch (mode) {
    case Broadcast::Same: return r * cols + c;
    case Broadcast::Row: return c;
    case Broadcast::Col: return r;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

// Reduces a full-shape gradient to the broadcast operand's shape.
Tensor reduce_to(Broadcast mode, const Tensor& g, const Shape& target) {
  if (mode == Broadcast::Same) return g;
  Tensor out(target, 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out[bindex(mode, r, c, g.cols())] += g.at(r, c);
    }
  }
  return out;
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool ta, bool tb) {
  // out += op(a) * op(b)
  const std::size_t n = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t m = tb ? b.rows() : b.cols();
  const double* A = a.ptr();
  const double* B = b.ptr();
  double* C = out.ptr();
  const std::size_t lda = a.cols(), ldb = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? A[p * lda + i] : A[i * lda + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = B + p * ldb;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * B[j * ldb + p];
      }
    }
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(OpKind::Matmul, A);
  require_rank2(OpKind::Matmul, B);
  if (A.cols() != B.rows()) mismatch(OpKind::Matmul, A.shape(), B.shape());
  Tensor out({A.rows(), B.cols()}, 0.0);
  matmul_into(A, B, out, false, false);
  Var vs[] = {a, b};
  NodeId ia = a.id(), ib = b.id();
  return a.graph().record(OpKind::Matmul, std::move(out), vs,
                          [ia, ib](Graph& g, const Tensor& go) {
                            const Tensor& A = g.value(ia);
                            const Tensor& B = g.value(ib);
                            if (g.requires_grad(ia)) matmul_into(go, B, g.grad_buffer(ia), false, true);
                            if (g.requires_grad(ib)) matmul_into(A, go, g.grad_buffer(ib), true, false);
                          });
}

namespace {

template <typename Fwd>
Var binary_elementwise(OpKind kind, const Var& a, const Var& b, Fwd fwd) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Broadcast mode = broadcast_mode(kind, A, B);
  Tensor out(A.shape());
  const std::size_t cols = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.at(r, c) = fwd(A.at(r, c), B[bindex(mode, r, c, cols)]);
    }
  }
  Var vs[] = {a, b};
  NodeId ia = a.id(), ib = b.id();
  return a.graph().record(kind, std::move(out), vs, [kind, mode, ia, ib](Graph& g, const Tensor& go) {
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    const std::size_t cols = A.cols();
    if (g.requires_grad(ia)) {
      Tensor ga(A.shape());
      for (std::size_t r = 0; r < A.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          double d = go.at(r, c);
          if (kind == OpKind::Mul) d *= B[bindex(mode, r, c, cols)];
          ga.at(r, c) = d;
        }
      }
      g.accumulate(ia, ga);
    }
    if (g.requires_grad(ib)) {
      Tensor gb(A.shape());
      for (std::size_t r = 0; r < A.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          double d = go.at(r, c);
          if (kind == OpKind::Sub) d = -d;
          if (kind == OpKind::Mul) d *= A.at(r, c);
          gb.at(r, c) = d;
        }
      }
      g.accumulate(ib, reduce_to(mode, gb, B.shape()));
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_elementwise(OpKind::Add, a, b, [](double x, double y) { return x + y; });
}

Var sub(const Var& a, const Var& b) {
  return binary_elementwise(OpKind::Sub, a, b, [](double x, double y) { return x - y; });
}

Var mul(const Var& a, const Var& b) {
  return binary_elementwise(OpKind::Mul, a, b, [](double x, double y) { return x * y; });
}

Var scale(const Var& a, double factor) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * factor;
  Var vs[] = {a};
  NodeId ia = a.id();
  return a.graph().record(OpKind::Scale, std::move(out), vs,
                          [ia, factor](Graph& g, const Tensor& go) {
                            Tensor gx(go.shape());
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] = go[i] * factor;
                            g.accumulate(ia, gx);
                          });
}

Var softmax(const Var& a) {
  const Tensor& A = a.value();
  require_rank2(OpKind::Softmax, A);
  Tensor out(A.shape());
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) mx = std::max(mx, A.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) z += (out.at(r, c) = std::exp(A.at(r, c) - mx));
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) /= z;
  }
  Var vs[] = {a};
  NodeId ia = a.id();
  Graph& graph = a.graph();
  NodeId io = graph.size();
  return graph.record(OpKind::Softmax, std::move(out), vs, [ia, io](Graph& g, const Tensor& go) {
    const Tensor& y = g.value(io);
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += go.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx.at(r, c) = y.at(r, c) * (go.at(r, c) - dot);
    }
    g.accumulate(ia, gx);
  });
}

Var log_softmax(const Var& a) {
  const Tensor& A = a.value();
  require_rank2(OpKind::LogSoftmax, A);
  Tensor out(A.shape());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < A.cols(); ++c) mx = std::max(mx, A.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) z += std::exp(A.at(r, c) - mx);
    double lz = mx + std::log(z);
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(r, c) - lz;
  }
  Var vs[] = {a};
  NodeId ia = a.id();
  Graph& graph = a.graph();
  NodeId io = graph.size();
  return graph.record(OpKind::LogSoftmax, std::move(out), vs, [ia, io](Graph& g, const Tensor& go) {
    const Tensor& y = g.value(io);
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += go.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx.at(r, c) = go.at(r, c) - std::exp(y.at(r, c)) * s;
    }
    g.accumulate(ia, gx);
  });
}

Var layer_norm(const Var& a, double eps) {
  const Tensor& A = a.value();
  require_rank2(OpKind::LayerNorm, A);
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(A.shape());
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean += A.at(r, c);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (A.at(r, c) - mean) * (A.at(r, c) - mean);
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) = (A.at(r, c) - mean) * inv_std[r];
  }
  Var vs[] = {a};
  NodeId ia = a.id();
  Graph& graph = a.graph();
  NodeId io = graph.size();
  return graph.record(OpKind::LayerNorm, std::move(out), vs,
                      [ia, io, inv_std = std::move(inv_std)](Graph& g, const Tensor& go) {
                        const Tensor& y = g.value(io);
                        const std::size_t m = y.cols();
                        Tensor gx(y.shape());
                        for (std::size_t r = 0; r < y.rows(); ++r) {
                          double mg = 0.0, mgy = 0.0;
                          for (std::size_t c = 0; c < m; ++c) {
                            mg += go.at(r, c);
                            mgy += go.at(r, c) * y.at(r, c);
                          }
                          mg /= static_cast<double>(m);
                          mgy /= static_cast<double>(m);
                          for (std::size_t c = 0; c < m; ++c) {
                            gx.at(r, c) = inv_std[r] * (go.at(r, c) - mg - y.at(r, c) * mgy);
                          }
                        }
                        g.accumulate(ia, gx);
                      });
}

Var embedding_lookup(const Var& table, std::span<const std::size_t> indices) {
  const Tensor& T = table.value();
  require_rank2(OpKind::EmbeddingLookup, T);
  if (indices.empty()) throw ShapeError("embedding-lookup: empty index list");
  const std::size_t m = T.cols();
  Tensor out({indices.size(), m});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= T.rows()) {
      throw ShapeError("embedding-lookup: index " + std::to_string(indices[i]) +
                       " out of range for table " + shape_string(T.shape()));
    }
    std::copy_n(T.ptr() + indices[i] * m, m, out.ptr() + i * m);
  }
  Var vs[] = {table};
  NodeId it = table.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.graph().record(OpKind::EmbeddingLookup, std::move(out), vs,
                              [it, idx = std::move(idx)](Graph& g, const Tensor& go) {
                                Tensor& gt = g.grad_buffer(it);
                                const std::size_t m = go.cols();
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  for (std::size_t c = 0; c < m; ++c) gt.at(idx[i], c) += go.at(i, c);
                                }
                              });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  const Tensor& first = parts[0].value();
  require_rank2(OpKind::Concat, first);
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    require_rank2(OpKind::Concat, t);
    if (axis == 0 && t.cols() != first.cols()) mismatch(OpKind::Concat, first.shape(), t.shape());
    if (axis == 1 && t.rows() != first.rows()) mismatch(OpKind::Concat, first.shape(), t.shape());
    total += axis == 0 ? t.rows() : t.cols();
  }
  Tensor out(axis == 0 ? Shape{total, first.cols()} : Shape{first.rows(), total});
  std::vector<NodeId> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    ids.push_back(p.id());
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (axis == 0) out.at(offset + r, c) = t.at(r, c);
        else out.at(r, offset + c) = t.at(r, c);
      }
    }
    offset += axis == 0 ? t.rows() : t.cols();
  }
  return parts[0].graph().record(
      OpKind::Concat, std::move(out), parts, [ids = std::move(ids), axis](Graph& g, const Tensor& go) {
        std::size_t offset = 0;
        for (NodeId id : ids) {
          const Tensor& t = g.value(id);
          if (g.requires_grad(id)) {
            Tensor& gt = g.grad_buffer(id);
            for (std::size_t r = 0; r < t.rows(); ++r) {
              for (std::size_t c = 0; c < t.cols(); ++c) {
                gt.at(r, c) += axis == 0 ? go.at(offset + r, c) : go.at(r, offset + c);
              }
            }
          }
          offset += axis == 0 ? t.rows() : t.cols();
        }
      });
}

namespace {

template <typename Fwd, typename Deriv>
Var pointwise(OpKind kind, const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = fwd(A[i]);
  Var vs[] = {a};
  NodeId ia = a.id();
  Graph& graph = a.graph();
  NodeId io = graph.size();
  return graph.record(kind, std::move(out), vs, [ia, io, deriv](Graph& g, const Tensor& go) {
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(io);
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += go[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var relu(const Var& a) {
  return pointwise(
      OpKind::Relu, a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return pointwise(
      OpKind::Sigmoid, a,
      [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return pointwise(
      OpKind::Tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var dropout(const Var& a, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ShapeError("dropout: keep probability must be in (0, 1]");
  }
  if (!a.graph().training || keep_prob == 1.0) return a;
  const Tensor& A = a.value();
  Rng rng(seed);
  std::vector<double> mask(A.size());
  for (auto& m : mask) m = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * mask[i];
  Var vs[] = {a};
  NodeId ia = a.id();
  return a.graph().record(OpKind::Dropout, std::move(out), vs,
                          [ia, mask = std::move(mask)](Graph& g, const Tensor& go) {
                            Tensor& gx = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
                          });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const Tensor& A = logits.value();
  require_rank2(OpKind::CrossEntropy, A);
  if (targets.size() != A.rows()) {
    throw ShapeError("cross-entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(A.shape()));
  }
  Tensor probs(A.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (targets[r] >= A.cols()) throw ShapeError("cross-entropy: target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < A.cols(); ++c) mx = std::max(mx, A.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) z += (probs.at(r, c) = std::exp(A.at(r, c) - mx));
    for (std::size_t c = 0; c < A.cols(); ++c) probs.at(r, c) /= z;
    loss -= A.at(r, targets[r]) - mx - std::log(z);
  }
  Var vs[] = {logits};
  NodeId il = logits.id();
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.graph().record(OpKind::CrossEntropy, Tensor::scalar(loss), vs,
                               [il, probs = std::move(probs), tg = std::move(tg)](Graph& g, const Tensor& go) {
                                 Tensor gx = probs;
                                 for (std::size_t r = 0; r < gx.rows(); ++r) gx.at(r, tg[r]) -= 1.0;
                                 for (auto& x : gx.data()) x *= go[0];
                                 g.accumulate(il, gx);
                               });
}

Var binary_cross_entropy(const Var& probs, std::span<const double> labels,
                         std::span<const double> weights) {
  const Tensor& P = probs.value();
  if (labels.size() != P.size() || weights.size() != P.size()) {
    throw ShapeError("binary-cross-entropy: " + std::to_string(labels.size()) + " labels and " +
                     std::to_string(weights.size()) + " weights for probabilities " +
                     shape_string(P.shape()));
  }
  constexpr double kLo = 1e-12, kHi = 1.0 - 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double p = std::clamp(P[i], kLo, kHi);
    loss -= weights[i] * (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  Var vs[] = {probs};
  NodeId ip = probs.id();
  std::vector<double> y(labels.begin(), labels.end()), w(weights.begin(), weights.end());
  return probs.graph().record(
      OpKind::BinaryCrossEntropy, Tensor::scalar(loss), vs,
      [ip, y = std::move(y), w = std::move(w)](Graph& g, const Tensor& go) {
        const Tensor& P = g.value(ip);
        Tensor gx(P.shape());
        for (std::size_t i = 0; i < P.size(); ++i) {
          if (P[i] < kLo || P[i] > kHi) continue;  // clamped: flat
          gx[i] = go[0] * -w[i] * (y[i] / P[i] - (1.0 - y[i]) / (1.0 - P[i]));
        }
        g.accumulate(ip, gx);
      });
}

Var transpose(const Var& a) {
  const Tensor& A = a.value();
  require_rank2(OpKind::Transpose, A);
  Tensor out({A.cols(), A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(c, r) = A.at(r, c);
  Var vs[] = {a};
  NodeId ia = a.id();
  return a.graph().record(OpKind::Transpose, std::move(out), vs, [ia](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < go.cols(); ++c) gx.at(c, r) += go.at(r, c);
  });
}

Var slice(const Var& a, int axis, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_rank2(OpKind::Slice, A);
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  std::size_t extent = axis == 0 ? A.rows() : A.cols();
  if (begin >= end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_string(A.shape()));
  }
  Shape s = axis == 0 ? Shape{end - begin, A.cols()} : Shape{A.rows(), end - begin};
  Tensor out(s);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out.at(r, c) = axis == 0 ? A.at(begin + r, c) : A.at(r, begin + c);
  Var vs[] = {a};
  NodeId ia = a.id();
  return a.graph().record(OpKind::Slice, std::move(out), vs, [ia, axis, begin](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(ia);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < go.cols(); ++c) {
        if (axis == 0) gx.at(begin + r, c) += go.at(r, c);
        else gx.at(r, begin + c) += go.at(r, c);
      }
  });
}

Var sum(const Var& a) {
  const Tensor& A = a.value();
  double s = 0.0;
  for (double x : A.data()) s += x;
  Var vs[] = {a};
  NodeId ia = a.id();
  return a.graph().record(OpKind::Sum, Tensor::scalar(s), vs, [ia](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(ia);
    for (auto& x : gx.data()) x += go[0];
  });
}

Var gather_cols(const Var& a, std::span<const std::size_t> index, std::size_t m) {
  const Tensor& A = a.value();
  require_rank2(OpKind::GatherCols, A);
  if (m == 0 || index.size() != A.rows() * m) {
    throw ShapeError("gather-cols: index grid of " + std::to_string(index.size()) +
                     " entries does not match " + std::to_string(A.rows()) + "x" + std::to_string(m));
  }
  Tensor out({A.rows(), m});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t k = index[i * m + j];
      if (k >= A.cols()) throw ShapeError("gather-cols: column index out of range");
      out.at(i, j) = A.at(i, k);
    }
  Var vs[] = {a};
  NodeId ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.graph().record(OpKind::GatherCols, std::move(out), vs,
                          [ia, m, idx = std::move(idx)](Graph& g, const Tensor& go) {
                            Tensor& gx = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < go.rows(); ++i)
                              for (std::size_t j = 0; j < m; ++j) gx.at(i, idx[i * m + j]) += go.at(i, j);
                          });
}

Var scatter_cols(const Var& a, std::span<const std::size_t> index, std::size_t width) {
  const Tensor& A = a.value();
  require_rank2(OpKind::ScatterCols, A);
  const std::size_t m = A.cols();
  if (index.size() != A.rows() * m || width == 0) {
    throw ShapeError("scatter-cols: index grid does not match " + shape_string(A.shape()));
  }
  Tensor out({A.rows(), width}, 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t k = index[i * m + j];
      if (k >= width) throw ShapeError("scatter-cols: target column out of range");
      out.at(i, k) += A.at(i, j);
    }
  Var vs[] = {a};
  NodeId ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.graph().record(OpKind::ScatterCols, std::move(out), vs,
                          [ia, m, idx = std::move(idx)](Graph& g, const Tensor& go) {
                            Tensor& gx = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < gx.rows(); ++i)
                              for (std::size_t j = 0; j < m; ++j) gx.at(i, j) += go.at(i, idx[i * m + j]);
                          });
}

Var pick(const Var& a, std::span<const std::size_t> flat_indices) {
  const Tensor& A = a.value();
  if (flat_indices.empty()) throw ShapeError("pick: empty index list");
  Tensor out({1, flat_indices.size()});
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= A.size()) throw ShapeError("pick: index out of range");
    out[i] = A[flat_indices[i]];
  }
  Var vs[] = {a};
  NodeId ia = a.id();
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  return a.graph().record(OpKind::Pick, std::move(out), vs,
                          [ia, idx = std::move(idx)](Graph& g, const Tensor& go) {
                            Tensor& gx = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += go[i];
                          });
}

Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::Matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::Add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::Sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::Mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::Scale: need(1); return scale(inputs[0], attrs.scalar);
    case OpKind::Softmax: need(1); return softmax(inputs[0]);
    case OpKind::LogSoftmax: need(1); return log_softmax(inputs[0]);
    case OpKind::LayerNorm: need(1); return layer_norm(inputs[0]);
    case OpKind::EmbeddingLookup: need(1); return embedding_lookup(inputs[0], attrs.indices);
    case OpKind::Concat: return concat(inputs, attrs.axis);
    case OpKind::Relu: need(1); return relu(inputs[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::Tanh: need(1); return tanh(inputs[0]);
    case OpKind::Dropout: need(1); return dropout(inputs[0], attrs.scalar, attrs.seed);
    case OpKind::CrossEntropy: need(1); return cross_entropy(inputs[0], attrs.indices);
    case OpKind::BinaryCrossEntropy:
      need(1);
      return binary_cross_entropy(inputs[0], attrs.labels, attrs.weights);
    case OpKind::Transpose: need(1); return transpose(inputs[0]);
    case OpKind::Slice: need(1); return slice(inputs[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::Sum: need(1); return sum(inputs[0]);
    case OpKind::GatherCols: need(1); return gather_cols(inputs[0], attrs.indices, attrs.width);
    case OpKind::ScatterCols: need(1); return scatter_cols(inputs[0], attrs.indices, attrs.width);
    case OpKind::Pick: need(1); return pick(inputs[0], attrs.indices);
    case OpKind::Leaf:
    case OpKind::Constant:
      break;
  }
  throw ShapeError(std::string(op_name(kind)) + ": not an applicable operation");
}

}  // namespace mtsql::tensor
