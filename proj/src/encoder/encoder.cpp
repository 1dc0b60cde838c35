#include "mtsql/encoder/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsql::encoder {

using namespace tensor;

Vocabulary::Vocabulary() { add("<unk>"); }

std::size_t Vocabulary::add(const std::string& word) {
  auto [it, fresh] = index_.emplace(word, words_.size());
  if (fresh) words_.push_back(word);
  return it->second;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnknown : it->second;
}

void EncoderConfig::validate() const {
  if (heads == 0 || d_emb % heads != 0) throw std::invalid_argument("encoder: d_emb must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
}

EncoderParams make_encoder(ParameterStore& store, const EncoderConfig& config, std::size_t vocab_size, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_emb, dk = d / config.heads;
  EncoderParams p;
  p.config = config;
  p.words = store.add("enc.words", xavier_uniform(vocab_size, d, rng));
  p.node_types = store.add("enc.node_types", xavier_uniform(4, d, rng));
  p.col_types = store.add("enc.col_types", xavier_uniform(4, d, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string n = "enc.layer" + std::to_string(l);
    RelationLayer layer;
    layer.q = nn::make_linear(store, n + ".q", d, d, rng, false);
    layer.k = nn::make_linear(store, n + ".k", d, d, rng, false);
    layer.v = nn::make_linear(store, n + ".v", d, d, rng, false);
    layer.o = nn::make_linear(store, n + ".o", d, d, rng);
    layer.rel_k = store.add(n + ".rel_k", xavier_uniform(config.relation_count, dk, rng));
    layer.rel_v = store.add(n + ".rel_v", xavier_uniform(config.relation_count, dk, rng));
    layer.norm1 = nn::make_norm(store, n + ".norm1", d);
    layer.norm2 = nn::make_norm(store, n + ".norm2", d);
    layer.ffn = nn::make_ffn(store, n + ".ffn", d, 4 * d, rng);
    p.layers.push_back(layer);
  }
  return p;
}

Var embed_input(Context& ctx, const EncoderParams& p, const Vocabulary& vocab, const schema::InputSequence& seq,
                const schema::SchemaGraph& schema) {
  std::vector<std::size_t> ids, kinds, types;
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& node : seq.nodes) {
    std::vector<std::size_t> g;
    for (const auto& w : node.words) {
      g.push_back(ids.size());
      ids.push_back(vocab.id(w));
    }
    if (g.empty()) {
      g.push_back(ids.size());
      ids.push_back(Vocabulary::kUnknown);
    }
    groups.push_back(std::move(g));
    kinds.push_back(static_cast<std::size_t>(node.kind));
    types.push_back(node.kind == schema::NodeKind::Column ? static_cast<std::size_t>(schema.columns[node.ref].type) : 3);
  }
  Var words = matmul(ctx.constant(nn::averaging_matrix(groups, ids.size())), embedding_lookup(ctx(p.words), ids));
  return add(add(words, embedding_lookup(ctx(p.node_types), kinds)), embedding_lookup(ctx(p.col_types), types));
}

Var relation_aware_attention(Context& ctx, const RelationLayer& layer, const EncoderConfig& config, const Var& x,
                             const schema::RelationMatrix& relations, AttentionTrace* trace) {
  const std::size_t n = x.rows(), d = config.d_emb, heads = config.heads, dk = d / heads;
  if (relations.size() != n) {
    throw ShapeError("relation_aware_attention: relation matrix is " + std::to_string(relations.size()) +
                     " wide for a sequence of " + std::to_string(n));
  }
  auto rel = relations.indices();
  for (auto r : rel)
    if (r >= config.relation_count) throw std::out_of_range("relation label " + std::to_string(r) + " outside vocabulary");

  Var q = linear(ctx, layer.q, x), k = linear(ctx, layer.k, x), v = linear(ctx, layer.v, x);
  Var rk = ctx(layer.rel_k), rv = ctx(layer.rel_v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice(q, 1, h * dk, (h + 1) * dk);
    Var kh = slice(k, 1, h * dk, (h + 1) * dk);
    Var vh = slice(v, 1, h * dk, (h + 1) * dk);
    // q_i . rK[R_ij]: score every label, then gather the label of each pair.
    Var rel_scores = gather_cols(matmul(qh, transpose(rk)), rel, n);
    Var e = scale(add(matmul(qh, transpose(kh)), rel_scores), inv);
    Var a = softmax(e);
    if (trace) {
      trace->scores.push_back(e.value());
      trace->weights.push_back(a.value());
    }
    Var ad = ctx.drop(a, config.dropout);
    Var z = matmul(ad, vh);
    // sum_j a_ij rV[R_ij] = (weights summed per label) x rV
    if (config.relation_values) z = add(z, matmul(scatter_cols(ad, rel, config.relation_count), rv));
    if (trace) trace->values.push_back(z.value());
    outs.push_back(z);
  }
  Var attn = linear(ctx, layer.o, heads == 1 ? outs[0] : concat(outs, 1));
  Var h1 = norm(ctx, layer.norm1, add(x, ctx.drop(attn, config.dropout)));
  return norm(ctx, layer.norm2, add(h1, ctx.drop(nn::ffn(ctx, layer.ffn, h1, config.dropout), config.dropout)));
}

EncoderOutput encode(Context& ctx, const EncoderParams& p, const Vocabulary& vocab, const schema::InputSequence& seq,
                     const schema::SchemaGraph& schema, const schema::RelationMatrix& relations) {
  return encode_embedded(ctx, p, embed_input(ctx, p, vocab, seq, schema), relations);
}

EncoderOutput encode_embedded(Context& ctx, const EncoderParams& p, const Var& chi,
                              const schema::RelationMatrix& relations) {
  EncoderOutput out;
  out.chi = chi;
  Var h = ctx.drop(out.chi, p.config.dropout);
  for (const auto& layer : p.layers) h = relation_aware_attention(ctx, layer, p.config, h, relations);
  out.states = h;
  out.pooled = slice(h, 0, 0, 1);
  return out;
}

}  // namespace mtsql::encoder
