#include "mtsql/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace mtsql::nn {

using namespace tensor;

Var Context::drop(const Var& x, double rate) {
  if (!training || rate <= 0.0) return x;
  // splitmix-style mixing keeps per-call seeds well separated
  const std::uint64_t s = seed * 0x9E3779B97F4A7C15ULL + (++calls) * 0xBF58476D1CE4E5B9ULL;
  return dropout(x, 1.0 - rate, s);
}

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                   bool bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = bias;
  l.w = store.add(name + ".w", xavier_uniform(in, out, rng));
  if (bias) l.b = store.add(name + ".b", Tensor({1, out}, 0.0));
  return l;
}

Var linear(Context& ctx, const Linear& l, const Var& x) {
  Var y = matmul(x, ctx(l.w));
  return l.has_bias ? add(y, ctx(l.b)) : y;
}

Norm make_norm(ParameterStore& store, const std::string& name, std::size_t d) {
  return {store.add(name + ".gain", Tensor({1, d}, 1.0)), store.add(name + ".bias", Tensor({1, d}, 0.0))};
}

Var norm(Context& ctx, const Norm& n, const Var& x) { return add(mul(layer_norm(x), ctx(n.gain)), ctx(n.bias)); }

FeedForward make_ffn(ParameterStore& store, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng) {
  return {make_linear(store, name + ".up", d, hidden, rng), make_linear(store, name + ".down", hidden, d, rng)};
}

Var ffn(Context& ctx, const FeedForward& f, const Var& x, double dropout) {
  return linear(ctx, f.down, ctx.drop(relu(linear(ctx, f.up, x)), dropout));
}

Attention make_attention(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads, Rng& rng) {
  if (heads == 0 || d % heads != 0) throw std::invalid_argument(name + ": d must be divisible by heads");
  return {heads, d, make_linear(store, name + ".q", d, d, rng), make_linear(store, name + ".k", d, d, rng),
          make_linear(store, name + ".v", d, d, rng), make_linear(store, name + ".o", d, d, rng)};
}

Var attend(Context& ctx, const Attention& a, const Var& queries, const Var& memory, double dropout) {
  const std::size_t dk = a.d / a.heads;
  Var q = linear(ctx, a.q, queries), k = linear(ctx, a.k, memory), v = linear(ctx, a.v, memory);
  std::vector<Var> heads;
  for (std::size_t h = 0; h < a.heads; ++h) {
    Var qh = slice(q, 1, h * dk, (h + 1) * dk);
    Var kh = slice(k, 1, h * dk, (h + 1) * dk);
    Var vh = slice(v, 1, h * dk, (h + 1) * dk);
    Var w = softmax(scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk))));
    heads.push_back(matmul(ctx.drop(w, dropout), vh));
  }
  return linear(ctx, a.o, a.heads == 1 ? heads[0] : concat(heads, 1));
}

double gradient_check(ParameterStore& store, const std::function<Var(Context&)>& loss, double eps, double floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradient_check: eps must be positive");
  auto evaluate = [&](std::vector<Tensor>* grads) {
    Graph g;
    Binding b(g, store);
    Context ctx(b, false, 0);
    Var l = loss(ctx);
    if (grads) *grads = b.gradients(l);
    return l.value().item();
  };
  std::vector<Tensor> analytic;
  evaluate(&analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& p = store.value(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + eps;
      const double up = evaluate(nullptr);
      p[k] = saved - eps;
      const double down = evaluate(nullptr);
      p[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][k];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
    }
  }
  return worst;
}

Tensor averaging_matrix(const std::vector<std::vector<std::size_t>>& groups, std::size_t width) {
  Tensor t({groups.size(), width}, 0.0);
  for (std::size_t r = 0; r < groups.size(); ++r) {
    if (groups[r].empty()) continue;
    const double w = 1.0 / static_cast<double>(groups[r].size());
    for (auto c : groups[r]) t.at(r, c) += w;
  }
  return t;
}

}  // namespace mtsql::nn
