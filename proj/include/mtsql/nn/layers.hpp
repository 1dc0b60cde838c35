#pragma once

#include <functional>

#include <cstdint>
#include <string>
#include <vector>

#include "mtsql/tensor/params.hpp"

namespace mtsql::nn {

using tensor::Binding;
using tensor::ParameterStore;
using tensor::ParamId;
using tensor::Rng;
using tensor::Tensor;
using tensor::Var;

// Per-forward-pass state: parameter binding, train/eval mode and a dropout
// seed stream so every dropout call gets its own reproducible mask.
struct Context {
  Binding& params;
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t calls = 0;

  Context(Binding& b, bool train, std::uint64_t s) : params(b), training(train), seed(s) { b.graph().training = train; }
  tensor::Graph& graph() const { return params.graph(); }
  Var operator()(ParamId id) { return params(id); }
  Var constant(Tensor t) { return graph().constant(std::move(t)); }
  Var drop(const Var& x, double rate);
};

struct Linear {
  ParamId w = 0, b = 0;
  bool has_bias = true;
  std::size_t in = 0, out = 0;
};

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool bias = true);
Var linear(Context& ctx, const Linear& l, const Var& x);

// Layer norm with learned gain (init 1) and bias (init 0).
struct Norm {
  ParamId gain = 0, bias = 0;
};
Norm make_norm(ParameterStore& store, const std::string& name, std::size_t d);
Var norm(Context& ctx, const Norm& n, const Var& x);

// Two-layer ReLU feed-forward block.
struct FeedForward {
  Linear up, down;
};
FeedForward make_ffn(ParameterStore& store, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng);
Var ffn(Context& ctx, const FeedForward& f, const Var& x, double dropout);

// Plain multi-head scaled dot-product attention of `queries` over `memory`.
struct Attention {
  std::size_t heads = 1, d = 0;
  Linear q, k, v, o;
};
Attention make_attention(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads, Rng& rng);
Var attend(Context& ctx, const Attention& a, const Var& queries, const Var& memory, double dropout);

// Central differences over every entry of every parameter in `store`.
// `loss` must be deterministic. Returns max |a - n| / max(|a|, |n|, floor);
// the floor keeps exactly-zero gradients (shift-invariant directions) from
// turning rounding noise into a relative error of 1.
double gradient_check(ParameterStore& store, const std::function<Var(Context&)>& loss, double eps,
                      double floor = 1e-6);

// Row-averaging matrix: row r holds 1/|groups[r]| at every listed column.
Tensor averaging_matrix(const std::vector<std::vector<std::size_t>>& groups, std::size_t width);

}  // namespace mtsql::nn
