#include "mtsql/train/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mtsql/linking/text.hpp"

namespace mtsql::train {

using tensor::Tensor;

PreparedInput prepare_input(std::string_view question, const schema::SchemaGraph& schema) {
  PreparedInput in;
  in.schema = &schema;
  in.words = linking::tokenize(question);
  in.cased = linking::tokenize_cased(question);
  in.seq = schema::serialize_input(in.words, schema);
  in.base = schema::build_schema_relations(schema, in.seq);
  in.candidates = linking::candidate_links(in.words, schema);
  return in;
}

std::vector<PreparedExample> prepare_examples(const std::vector<eval::Example>& examples,
                                              const eval::SchemaIndex& schemas, PrepareReport* report) {
  PrepareReport r;
  std::vector<PreparedExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    ++r.input;
    auto it = schemas.find(e.db_id);
    if (it == schemas.end()) {
      ++r.unknown_db;
      continue;
    }
    PreparedExample ex;
    ex.id = e.db_id + "#" + std::to_string(i);
    ex.source = e;
    try {
      ex.gold = sql::parse_sql(e.query, it->second);
      ex.gold_tree = sql::to_relational_algebra(*ex.gold);
    } catch (const std::exception&) {
      ++r.unparsable;
      continue;
    }
    ex.input = prepare_input(e.question, it->second);
    ex.link_labels = linking::gold_link_labels(ex.input.candidates, *ex.gold);
    ex.triples = ote::gold_triples(*ex.gold, it->second, ex.input.seq);
    out.push_back(std::move(ex));
    ++r.kept;
  }
  if (report) *report = r;
  return out;
}

nlohmann::json to_json(const PreparedExample& ex) {
  const auto& in = ex.input;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : in.seq.nodes) {
    static const char* kinds[] = {"separator", "question", "table", "column"};
    nodes.push_back({{"kind", kinds[static_cast<int>(n.kind)]}, {"words", n.words}, {"ref", n.ref}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (std::size_t i = 0; i < in.candidates.size(); ++i) {
    const auto& c = in.candidates[i];
    links.push_back({{"start", c.start},
                     {"end", c.end},
                     {"category", linking::category_name(c.category)},
                     {"node", c.node},
                     {"grade", linking::grade_name(c.grade)},
                     {"label", ex.link_labels[i]}});
  }
  nlohmann::json triples = nlohmann::json::array();
  for (const auto& t : ex.triples) {
    triples.push_back({{"subject", {t.s_start, t.s_end}},
                       {"object", {t.o_start, t.o_end}},
                       {"relationship", ote::relationship_name(t.r)}});
  }
  return {{"id", ex.id},
          {"db_id", ex.source.db_id},
          {"question", ex.source.question},
          {"query", ex.source.query},
          {"sequence", nodes},
          {"relations", in.base.indices()},
          {"links", links},
          {"triples", triples},
          {"tree", ex.gold_tree->key}};
}

encoder::Vocabulary build_vocabulary(const std::vector<PreparedExample>& examples) {
  encoder::Vocabulary v;
  for (const auto& ex : examples)
    for (const auto& n : ex.input.seq.nodes)
      for (const auto& w : n.words) v.add(w);
  return v;
}

Model make_model(const TrainConfig& config, encoder::Vocabulary vocab) {
  config.validate();
  Model m;
  m.config = config;
  m.vocab = std::move(vocab);
  tensor::Rng rng(config.seed);
  const std::size_t d = config.encoder.d_emb;
  m.encoder = encoder::make_encoder(m.store, config.encoder, m.vocab.size(), rng);
  m.encoder_params = m.store.size();
  m.sld = linking::make_sld(m.store, d, config.sld_hidden, rng);
  m.ote = ote::make_ote(m.store, config.ote, d, rng);
  m.decoder = decoder::make_decoder(m.store, config.decoder, d, rng);
  return m;
}

Var total_loss(const Var& delta, const Var& alpha, const Var& beta, double lambda, double mu) {
  return add(delta, add(scale(alpha, lambda), scale(beta, mu)));
}

namespace {

Var zero(nn::Context& ctx) { return ctx.constant(Tensor({1, 1}, 0.0)); }

std::vector<double> values_of(const Var& probs) {
  const auto& t = probs.value();
  return std::vector<double>(t.data().begin(), t.data().end());
}

// Relation matrix with the links the encoder should see.
schema::RelationMatrix linked_relations(const Model& m, const PreparedInput& in, const std::vector<double>& scores) {
  schema::RelationMatrix r = in.base;
  if (in.candidates.empty()) return r;
  if (!m.config.use_sld) {
    linking::filter_links(r, in.seq, in.candidates, std::vector<double>(in.candidates.size(), 1.0), 0.0);
  } else {
    linking::filter_links(r, in.seq, in.candidates, scores, m.config.rho);
  }
  return r;
}

}  // namespace

Losses forward_losses(nn::Context& ctx, const Model& m, const PreparedExample& ex, LinkSource links) {
  const auto& in = ex.input;
  Losses out;
  Var chi = encoder::embed_input(ctx, m.encoder, m.vocab, in.seq, *in.schema);
  out.alpha = zero(ctx);
  std::vector<double> scores;
  if (m.config.use_sld && !in.candidates.empty()) {
    Var probs = linking::sld_scores(ctx, m.sld, chi, in.seq, in.candidates);
    out.alpha = linking::sld_loss(probs, ex.link_labels, linking::link_weights(ex.link_labels, m.config.link_weighting));
    scores = links == LinkSource::Gold ? ex.link_labels : values_of(probs);
  }
  const auto relations = linked_relations(m, in, scores);
  Var states = encoder::encode_embedded(ctx, m.encoder, chi, relations).states;

  out.beta = zero(ctx);
  if (m.config.use_ote) out.beta = ote::ote_loss(ex.triples, ote::run_ote(ctx, m.ote, states));

  decoder::DecoderInput din{in.schema, &in.seq, in.cased, ctx.drop(states, m.config.tree_dropout)};
  auto tl = decoder::tree_loss(ctx, m.decoder, din, ex.gold_tree);
  out.delta = tl.loss;
  out.unreachable_leaves = tl.unreachable_leaves;
  out.total = total_loss(out.delta, out.alpha, out.beta, m.config.lambda, m.config.mu);
  return out;
}

Prediction predict(const Model& m, const PreparedInput& in) {
  tensor::Graph g;
  tensor::Binding b(g, m.store);
  nn::Context ctx(b, false, 0);
  Var chi = encoder::embed_input(ctx, m.encoder, m.vocab, in.seq, *in.schema);
  std::vector<double> scores;
  if (m.config.use_sld && !in.candidates.empty()) scores = values_of(linking::sld_scores(ctx, m.sld, chi, in.seq, in.candidates));
  Var states = encoder::encode_embedded(ctx, m.encoder, chi, linked_relations(m, in, scores)).states;

  Prediction p;
  if (m.config.use_ote) p.triples = ote::decode_triples(ote::run_ote(ctx, m.ote, states));
  const auto rules = decoder::make_rules(p.triples, in.seq, m.config.decoder);
  decoder::DecoderInput din{in.schema, &in.seq, in.cased, states};
  auto r = decoder::generate(ctx, m.decoder, din, rules);
  p.tree = r.tree;
  p.fallbacks = r.fallbacks;
  p.forced = r.forced;
  try {
    p.query = sql::lift_query(r.tree, *in.schema);
    p.sql = sql::to_sql(*p.query, *in.schema);
  } catch (const sql::RaError&) {
    p.query = nullptr;
  }
  return p;
}

std::string serialize_model(const Model& m) {
  const std::string header = nlohmann::json{{"config", format_config(m.config)}, {"vocabulary", m.vocab.words()}}.dump();
  return "mtsql-model " + std::to_string(kModelVersion) + "\n" + std::to_string(header.size()) + "\n" + header + "\n" +
         tensor::serialize_checkpoint(m.store);
}

void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw tensor::CheckpointError("model: cannot write " + path.string());
  const std::string bytes = serialize_model(m);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw tensor::CheckpointError("model: write failed for " + path.string());
}

Model parse_model(std::string_view bytes) {
  auto line = [&](std::string_view& rest) {
    const auto nl = rest.find('\n');
    if (nl == std::string_view::npos) throw tensor::CheckpointError("model: truncated header");
    std::string_view l = rest.substr(0, nl);
    rest.remove_prefix(nl + 1);
    return l;
  };
  std::string_view rest = bytes;
  const std::string_view magic = line(rest);
  const std::string expected = "mtsql-model " + std::to_string(kModelVersion);
  if (magic.substr(0, 12) != "mtsql-model ") throw tensor::CheckpointError("model: not a model file");
  if (magic != expected) {
    throw tensor::CheckpointError("model: version mismatch, file says '" + std::string(magic) + "', expected '" + expected + "'");
  }
  std::size_t length = 0;
  try {
    length = std::stoul(std::string(line(rest)));
  } catch (const std::exception&) {
    throw tensor::CheckpointError("model: corrupt header length");
  }
  if (length + 1 > rest.size()) throw tensor::CheckpointError("model: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(rest.substr(0, length));
  } catch (const nlohmann::json::exception& e) {
    throw tensor::CheckpointError(std::string("model: corrupt header: ") + e.what());
  }
  rest.remove_prefix(length + 1);

  encoder::Vocabulary vocab;
  const auto words = header.at("vocabulary").get<std::vector<std::string>>();
  for (std::size_t i = 1; i < words.size(); ++i) vocab.add(words[i]);
  Model m = make_model(parse_config(header.at("config").get<std::string>()), std::move(vocab));
  const tensor::ParameterStore loaded = tensor::parse_checkpoint(rest);
  if (loaded.size() != m.store.size()) throw tensor::CheckpointError("model: parameter count does not match the config");
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded.name(i) != m.store.name(i) || loaded.value(i).shape() != m.store.value(i).shape()) {
      throw tensor::CheckpointError("model: parameter " + loaded.name(i) + " does not match the config");
    }
    m.store.value(i) = loaded.value(i);
  }
  return m;
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw tensor::CheckpointError("model: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_model(ss.str());
}

}  // namespace mtsql::train
