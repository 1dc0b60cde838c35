#pragma once

// Finite-difference cases shared by the unit suite and the acceptance suite:
// one loss builder per differentiable op kind over random small shapes.

#include <string>
#include <vector>

#include "mtsql/tensor/graph.hpp"
#include "mtsql/tensor/params.hpp"

namespace mtsql::testing {

struct GradientCase {
  std::string name;
  tensor::LossBuilder build;
  std::vector<tensor::Tensor> params;
};

inline tensor::Tensor random_tensor(std::size_t r, std::size_t c, tensor::Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
  tensor::Tensor t({r, c});
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

// Contracts an arbitrary output against fixed random weights so no gradient
// entry is identically zero.
inline tensor::Var contract(const tensor::Var& out, std::uint64_t seed) {
  tensor::Rng rng(seed);
  auto w = random_tensor(out.rows(), out.cols(), rng);
  return tensor::sum(tensor::mul(out, out.graph().constant(w)));
}

inline std::vector<GradientCase> gradient_cases(std::uint64_t seed) {
  using namespace tensor;
  Rng rng(seed);
  auto dim = [&] { return 1 + rng.below(8); };
  std::vector<GradientCase> cases;
  auto unary = [&](std::string name, auto op, double lo = -1.0, double hi = 1.0) {
    std::size_t r = dim(), c = dim();
    cases.push_back({std::move(name),
                     [op, seed](Graph&, std::span<const Var> p) { return contract(op(p[0]), seed + 1); },
                     {random_tensor(r, c, rng, lo, hi)}});
  };
  {
    std::size_t n = dim(), k = dim(), m = dim();
    cases.push_back({"matmul",
                     [seed](Graph&, std::span<const Var> p) { return contract(matmul(p[0], p[1]), seed + 2); },
                     {random_tensor(n, k, rng), random_tensor(k, m, rng)}});
  }
  for (int mode = 0; mode < 4; ++mode) {
    std::size_t n = dim(), m = dim();
    std::size_t br = mode == 0 || mode == 2 ? n : 1;
    std::size_t bc = mode == 0 || mode == 1 ? m : 1;
    if (mode == 2) bc = 1;
    const char* tags[] = {"same", "row", "col", "scalar"};
    for (auto [label, fn] : {std::pair<std::string, Var (*)(const Var&, const Var&)>{"add", &add},
                             {"sub", &sub},
                             {"mul", &mul}}) {
      cases.push_back({label + "/" + tags[mode],
                       [fn, seed](Graph&, std::span<const Var> p) { return contract(fn(p[0], p[1]), seed + 3); },
                       {random_tensor(n, m, rng), random_tensor(br, bc, rng)}});
    }
  }
  unary("scale", [](const Var& x) { return scale(x, -1.7); });
  unary("softmax", [](const Var& x) { return softmax(x); });
  unary("log-softmax", [](const Var& x) { return log_softmax(x); });
  {
    std::size_t r = dim(), c = 2 + rng.below(7);
    cases.push_back({"layer-norm",
                     [seed](Graph&, std::span<const Var> p) { return contract(layer_norm(p[0]), seed + 4); },
                     {random_tensor(r, c, rng)}});
  }
  {
    std::size_t rows = dim(), c = dim();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0, n = dim(); i < n; ++i) idx.push_back(rng.below(rows));
    cases.push_back({"embedding-lookup",
                     [idx, seed](Graph&, std::span<const Var> p) {
                       return contract(embedding_lookup(p[0], idx), seed + 5);
                     },
                     {random_tensor(rows, c, rng)}});
  }
  for (int axis = 0; axis < 2; ++axis) {
    std::size_t r = dim(), c = dim(), extra = dim();
    auto a = random_tensor(r, c, rng);
    auto b = axis == 0 ? random_tensor(extra, c, rng) : random_tensor(r, extra, rng);
    cases.push_back({"concat/axis" + std::to_string(axis),
                     [axis, seed](Graph&, std::span<const Var> p) {
                       Var parts[] = {p[0], p[1]};
                       return contract(concat(parts, axis), seed + 6);
                     },
                     {a, b}});
  }
  unary("relu", [](const Var& x) { return relu(x); });
  unary("sigmoid", [](const Var& x) { return sigmoid(x); }, -3.0, 3.0);
  unary("tanh", [](const Var& x) { return tanh(x); });
  {
    std::size_t r = dim(), c = dim();
    cases.push_back({"dropout",
                     [seed](Graph& g, std::span<const Var> p) {
                       g.training = true;  // fixed seed: the mask is deterministic
                       return contract(dropout(p[0], 0.7, seed + 7), seed + 8);
                     },
                     {random_tensor(r, c, rng)}});
  }
  {
    std::size_t r = dim(), c = dim();
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < r; ++i) targets.push_back(rng.below(c));
    cases.push_back({"cross-entropy",
                     [targets](Graph&, std::span<const Var> p) { return cross_entropy(p[0], targets); },
                     {random_tensor(r, c, rng, -2.0, 2.0)}});
  }
  {
    std::size_t r = dim(), c = dim();
    std::vector<double> labels, weights;
    for (std::size_t i = 0; i < r * c; ++i) {
      labels.push_back(static_cast<double>(rng.below(2)));
      weights.push_back(rng.uniform(0.5, 2.0));
    }
    cases.push_back({"binary-cross-entropy",
                     [labels, weights](Graph&, std::span<const Var> p) {
                       return binary_cross_entropy(p[0], labels, weights);
                     },
                     {random_tensor(r, c, rng, 0.05, 0.95)}});
  }
  unary("transpose", [](const Var& x) { return transpose(x); });
  for (int axis = 0; axis < 2; ++axis) {
    std::size_t r = 2 + rng.below(7), c = 2 + rng.below(7);
    std::size_t extent = axis == 0 ? r : c;
    std::size_t b = rng.below(extent - 1);
    std::size_t e = b + 1 + rng.below(extent - b);
    cases.push_back({"slice/axis" + std::to_string(axis),
                     [axis, b, e, seed](Graph&, std::span<const Var> p) {
                       return contract(slice(p[0], axis, b, e), seed + 9);
                     },
                     {random_tensor(r, c, rng)}});
  }
  unary("sum", [](const Var& x) { return scale(sum(x), 1.0); });
  {
    std::size_t r = dim(), c = dim(), m = dim();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r * m; ++i) idx.push_back(rng.below(c));
    cases.push_back({"gather-cols",
                     [idx, m, seed](Graph&, std::span<const Var> p) {
                       return contract(gather_cols(p[0], idx, m), seed + 10);
                     },
                     {random_tensor(r, c, rng)}});
  }
  {
    std::size_t r = dim(), c = dim(), width = dim();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r * c; ++i) idx.push_back(rng.below(width));
    cases.push_back({"scatter-cols",
                     [idx, width, seed](Graph&, std::span<const Var> p) {
                       return contract(scatter_cols(p[0], idx, width), seed + 11);
                     },
                     {random_tensor(r, c, rng)}});
  }
  {
    std::size_t r = dim(), c = dim();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0, n = dim(); i < n; ++i) idx.push_back(rng.below(r * c));
    cases.push_back({"pick",
                     [idx, seed](Graph&, std::span<const Var> p) { return contract(pick(p[0], idx), seed + 12); },
                     {random_tensor(r, c, rng)}});
  }
  return cases;
}

}  // namespace mtsql::testing
