#include "mtsql/train/trainer.hpp"

#include <cmath>
#include <numeric>

#include "mtsql/eval/metrics.hpp"

namespace mtsql::train {

using tensor::Tensor;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double encoder_norm(const std::vector<Tensor>& grads, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    for (double g : grads[i].data()) s += g * g;
  return std::sqrt(s);
}

bool all_active(const PreparedExample& ex) { return !ex.input.candidates.empty() && !ex.triples.empty(); }

}  // namespace

GradientNorms encoder_gradient_norms(const Model& m, const PreparedExample& ex, LinkSource links) {
  tensor::Graph g;
  tensor::Binding b(g, m.store);
  nn::Context ctx(b, false, 0);
  const Losses l = forward_losses(ctx, m, ex, links);
  GradientNorms n;
  n.delta = encoder_norm(b.gradients(l.delta), m.encoder_params);
  n.alpha = encoder_norm(b.gradients(l.alpha), m.encoder_params);
  n.beta = encoder_norm(b.gradients(l.beta), m.encoder_params);
  return n;
}

nlohmann::json EpochReport::to_json() const {
  return {{"epoch", epoch},
          {"loss", loss},
          {"loss_delta", delta},
          {"loss_alpha", alpha},
          {"loss_beta", beta},
          {"held_out_esm", held_out_esm},
          {"fallbacks", fallbacks},
          {"unreachable_leaves", unreachable_leaves},
          {"links", links == LinkSource::Gold ? "gold" : "predicted"},
          {"encoder_grad_norm", {{"delta", norms.delta}, {"alpha", norms.alpha}, {"beta", norms.beta}}}};
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json e = nlohmann::json::array();
  for (const auto& r : epochs) e.push_back(r.to_json());
  return {{"epochs", e}, {"best_epoch", best_epoch}, {"best_held_out_esm", best_esm}, {"stopped_early", stopped_early}};
}

Trainer::Trainer(Model& model) : model_(&model) { opt_.hyper.learning_rate = model.config.learning_rate; }

EpochReport Trainer::train_epoch(const std::vector<PreparedExample>& data) {
  Model& m = *model_;
  const auto& cfg = m.config;
  EpochReport rep;
  rep.epoch = epoch_;
  rep.links = epoch_ < cfg.gold_link_epochs ? LinkSource::Gold : LinkSource::Predicted;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  tensor::Rng rng(mix(cfg.seed, 1000 + epoch_));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  bool telemetry = false;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const double w = 1.0 / static_cast<double>(end - start);
    std::vector<Tensor> acc;
    for (std::size_t k = start; k < end; ++k) {
      const PreparedExample& ex = data[order[k]];
      tensor::Graph g;
      tensor::Binding b(g, m.store);
      nn::Context ctx(b, true, mix(mix(cfg.seed, epoch_), k));
      Losses l;
      try {
        l = forward_losses(ctx, m, ex, rep.links);
      } catch (const std::exception& e) {
        throw TrainError("example " + ex.id + ": " + e.what());
      }
      const double total = l.total.value()[0];
      if (!std::isfinite(total)) {
        throw TrainError("non-finite loss on example " + ex.id + " (L_delta " + std::to_string(l.delta.value()[0]) +
                         ", L_alpha " + std::to_string(l.alpha.value()[0]) + ", L_beta " +
                         std::to_string(l.beta.value()[0]) + ")");
      }
      if (!telemetry && all_active(ex)) {
        rep.norms = encoder_gradient_norms(m, ex, rep.links);
        telemetry = true;
      }
      rep.loss += total;
      rep.delta += l.delta.value()[0];
      rep.alpha += l.alpha.value()[0];
      rep.beta += l.beta.value()[0];
      rep.unreachable_leaves += l.unreachable_leaves;
      auto grads = b.gradients(l.total);
      if (acc.empty()) {
        acc = std::move(grads);
        for (auto& t : acc)
          for (double& v : t.data()) v *= w;
      } else {
        for (std::size_t i = 0; i < acc.size(); ++i) {
          auto dst = acc[i].data();
          auto src = grads[i].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
        }
      }
    }
    tensor::adam_update(m.store, acc, opt_);
  }
  if (!data.empty()) {
    const double n = static_cast<double>(data.size());
    rep.loss /= n;
    rep.delta /= n;
    rep.alpha /= n;
    rep.beta /= n;
  }
  ++epoch_;
  return rep;
}

HeldOut held_out_esm(const Model& m, const std::vector<PreparedExample>& data) {
  HeldOut h;
  if (data.empty()) return h;
  std::size_t ok = 0;
  for (const auto& ex : data) {
    const Prediction p = predict(m, ex.input);
    h.fallbacks += p.fallbacks;
    if (p.query && eval::exact_set_match(*p.query, *ex.gold)) ++ok;
  }
  h.esm = static_cast<double>(ok) / static_cast<double>(data.size());
  return h;
}

TrainReport train(Model& model, const std::vector<PreparedExample>& data, const std::vector<PreparedExample>& held_out,
                  const std::function<void(const EpochReport&)>& on_epoch) {
  TrainReport report;
  Trainer trainer(model);
  std::vector<Tensor> best;
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < model.config.epochs; ++e) {
    EpochReport r = trainer.train_epoch(data);
    if (!held_out.empty()) {
      const HeldOut h = held_out_esm(model, held_out);
      r.held_out_esm = h.esm;
      r.fallbacks = h.fallbacks;
      if (h.esm > report.best_esm) {
        report.best_esm = h.esm;
        report.best_epoch = e;
        best.assign(model.store.values().begin(), model.store.values().end());
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    report.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
    if (!held_out.empty() && since_best >= model.config.patience) {
      report.stopped_early = e + 1 < model.config.epochs;
      break;
    }
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < best.size(); ++i) model.store.value(i) = best[i];
  }
  return report;
}

}  // namespace mtsql::train
