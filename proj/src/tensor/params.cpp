#include "mtsql/tensor/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtsql::tensor {

ParamId ParameterStore::add(std::string name, Tensor init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

Var Binding::operator()(ParamId id) {
  if (!nodes_.at(id)) nodes_[id] = graph_->leaf(store_->value(id)).id();
  return Var(graph_, *nodes_[id]);
}

std::vector<std::pair<ParamId, NodeId>> Binding::bound() const {
  std::vector<std::pair<ParamId, NodeId>> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i]) out.emplace_back(i, *nodes_[i]);
  }
  return out;
}

std::vector<Tensor> Binding::gradients(const Var& loss) const {
  auto pairs = bound();
  std::vector<NodeId> ids;
  for (auto& [p, n] : pairs) ids.push_back(n);
  GradientMap map = graph_->backward(loss, ids);
  std::vector<Tensor> out;
  out.reserve(store_->size());
  for (std::size_t i = 0; i < store_->size(); ++i) {
    out.push_back(nodes_[i] ? map.at(*nodes_[i]) : Tensor(store_->value(i).shape(), 0.0));
  }
  return out;
}

void adam_update(std::span<Tensor> params, std::span<const std::optional<Tensor>> grads,
                 OptimizerState& state) {
  if (grads.size() != params.size()) {
    throw OptimizerError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (state.step < 0) throw OptimizerError("adam: negative step counter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) throw OptimizerError("adam: missing gradient for parameter " + std::to_string(i));
    if (grads[i]->shape() != params[i].shape()) {
      throw OptimizerError("adam: gradient shape " + shape_string(grads[i]->shape()) +
                           " differs from parameter shape " + shape_string(params[i].shape()));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape(), 0.0);
      state.second_moment.emplace_back(p.shape(), 0.0);
    }
  }
  const auto& h = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i]->data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

void adam_update(ParameterStore& params, std::span<const Tensor> grads, OptimizerState& state) {
  std::vector<std::optional<Tensor>> wrapped(grads.begin(), grads.end());
  adam_update(params.values(), wrapped, state);
}

namespace {

void put_le(std::string& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ParameterStore& params) {
  std::string out = "mtsql-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  out += std::to_string(params.size()) + "\n";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    if (name.find_first_of("\t\n") != std::string::npos) {
      throw CheckpointError("parameter name contains tab or newline: " + name);
    }
    out += name + "\t";
    const auto& shape = params.value(i).shape();
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d) out += ',';
      out += std::to_string(shape[d]);
    }
    out += "\n";
  }
  out += "payload\n";
  for (const auto& t : params.values())
    for (double x : t.data()) put_le(out, x);
  return out;
}

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint: " + path.string());
  const std::string bytes = serialize_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("short write to checkpoint: " + path.string());
}

ParameterStore parse_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw CheckpointError("corrupt checkpoint: truncated header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  const std::string tag = next_line();
  const std::string expected = "mtsql-checkpoint " + std::to_string(kCheckpointVersion);
  if (tag.rfind("mtsql-checkpoint ", 0) != 0) throw CheckpointError("not a checkpoint file");
  if (tag != expected) throw CheckpointError("checkpoint version mismatch: '" + tag + "'");
  std::size_t count = 0;
  try {
    count = std::stoul(next_line());
  } catch (const std::logic_error&) {
    throw CheckpointError("corrupt checkpoint: bad entry count");
  }
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    std::string line = next_line();
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw CheckpointError("corrupt checkpoint manifest line " + std::to_string(i));
    Shape shape;
    std::stringstream dims(line.substr(tab + 1));
    std::string d;
    while (std::getline(dims, d, ',')) {
      try {
        shape.push_back(std::stoul(d));
      } catch (const std::logic_error&) {
        throw CheckpointError("corrupt checkpoint manifest shape for " + line.substr(0, tab));
      }
    }
    if (shape.empty()) throw CheckpointError("corrupt checkpoint: empty shape for " + line.substr(0, tab));
    manifest.emplace_back(line.substr(0, tab), std::move(shape));
  }
  if (next_line() != "payload") throw CheckpointError("corrupt checkpoint: missing payload marker");
  std::size_t needed = 0;
  for (auto& [n, s] : manifest) needed += shape_size(s) * 8;
  if (bytes.size() - pos != needed) {
    throw CheckpointError("corrupt checkpoint: payload has " + std::to_string(bytes.size() - pos) +
                          " bytes, manifest needs " + std::to_string(needed));
  }
  ParameterStore store;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (auto& [name, shape] : manifest) {
    std::vector<double> data(shape_size(shape));
    for (auto& x : data) {
      x = get_le(p);
      p += 8;
    }
    store.add(name, Tensor(shape, std::move(data)));
  }
  return store;
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_checkpoint(buf.str());
}

double finite_difference_check(const LossBuilder& build, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(g.leaf(p));
    Var loss = build(g, leaves);
    if (with_grad) {
      std::vector<NodeId> ids;
      for (auto& l : leaves) ids.push_back(l.id());
      auto map = g.backward(loss, ids);
      for (auto& l : leaves) grads->push_back(map.at(l.id()));
    }
    return loss.value().item();
  };
  std::vector<Tensor> analytic;
  evaluate(true, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      const double saved = params[i][k];
      params[i][k] = saved + eps;
      const double up = evaluate(false, nullptr);
      params[i][k] = saved - eps;
      const double down = evaluate(false, nullptr);
      params[i][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mtsql::tensor
