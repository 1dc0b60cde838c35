#pragma once

#include <vector>

#include "mtsql/encoder/vocab.hpp"
#include "mtsql/nn/layers.hpp"
#include "mtsql/schema/relations.hpp"

namespace mtsql::encoder {

using nn::Context;
using tensor::Var;

struct EncoderConfig {
  std::size_t layers = 8;
  std::size_t heads = 8;
  std::size_t d_emb = 64;
  double dropout = 0.2;
  bool relation_values = true;  // value-side relation bias R^V
  std::size_t relation_count = schema::kRelationCount;

  void validate() const;
};

struct RelationLayer {
  nn::Linear q, k, v, o;
  tensor::ParamId rel_k = 0, rel_v = 0;  // [relation_count, d_emb / heads], shared across heads
  nn::Norm norm1, norm2;
  nn::FeedForward ffn;
};

struct EncoderParams {
  EncoderConfig config;
  tensor::ParamId words = 0;       // [vocab, d]
  tensor::ParamId node_types = 0;  // [4, d]: separator, question, table, column
  tensor::ParamId col_types = 0;   // [4, d]: number, time, text, not-a-column
  std::vector<RelationLayer> layers;
};

EncoderParams make_encoder(tensor::ParameterStore& store, const EncoderConfig& config, std::size_t vocab_size,
                           tensor::Rng& rng);

// chi: word embedding (mean over a node's words) + node-type embedding +
// column-type embedding. One row per sequence position.
Var embed_input(Context& ctx, const EncoderParams& p, const Vocabulary& vocab, const schema::InputSequence& seq,
                const schema::SchemaGraph& schema);

struct AttentionTrace {
  std::vector<tensor::Tensor> scores;   // per head, pre-softmax e_ij
  std::vector<tensor::Tensor> weights;  // per head, softmax rows
  std::vector<tensor::Tensor> values;   // per head, z before the output projection
};

// One relation-aware layer: per-head scores
//   e_ij = x_i Wq (x_j Wk + rK[R_ij])^T / sqrt(d/H)
// values z_i = sum_j a_ij (x_j Wv + rV[R_ij]), then output projection,
// residual + norm, feed-forward, residual + norm.
Var relation_aware_attention(Context& ctx, const RelationLayer& layer, const EncoderConfig& config, const Var& x,
                             const schema::RelationMatrix& relations, AttentionTrace* trace = nullptr);

struct EncoderOutput {
  Var chi;     // input embeddings
  Var states;  // h_t, one row per position
  Var pooled;  // first-position row
};

EncoderOutput encode(Context& ctx, const EncoderParams& p, const Vocabulary& vocab, const schema::InputSequence& seq,
                     const schema::SchemaGraph& schema, const schema::RelationMatrix& relations);
// Same, from input embeddings computed by the caller (the discriminator
// scores links on chi before the relation matrix is final).
EncoderOutput encode_embedded(Context& ctx, const EncoderParams& p, const Var& chi,
                              const schema::RelationMatrix& relations);

}  // namespace mtsql::encoder
