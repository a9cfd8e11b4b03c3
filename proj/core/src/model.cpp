#include "ldpp/model.hpp"

#include <spdlog/spdlog.h>

#include <numeric>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

using nn::Tape;

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(static_cast<size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// Shared trunk: token + position embeddings, bidirectional layers, final norm.
template <typename Model>
Tape::Id trunk_node(Tape& t, Model& m, const std::vector<int>& ids, int n_heads) {
  Tape::Id tok = t.rows_gather(t.param(m.tok_embed), ids);
  Tape::Id pos = t.rows_gather(t.param(m.pos_embed), iota_ids(static_cast<int>(ids.size())));
  Tape::Id x = t.add(tok, pos);
  for (auto& layer : m.layers)
    x = nn::transformer_layer(t, layer, x, n_heads, /*causal=*/false);
  return nn::layer_norm_p(t, m.ln_f, x);
}

std::vector<int> truncate_with_warning(std::vector<int> ids, int max_len,
                                       const char* what) {
  if (static_cast<int>(ids.size()) > max_len) {
    spdlog::warn("{} input of {} tokens truncated to max_seq_len={}", what,
                 ids.size(), max_len);
    ids.resize(static_cast<size_t>(max_len));
  }
  return ids;
}

}  // namespace

std::vector<int> encoder_input_ids(const ModelBundle& bundle, const Turn& utterance) {
  validate_turn(utterance, "encoder input");
  std::vector<int> ids{Tokenizer::kCls};
  for (int id : bundle.tokenizer.encode_text(utterance.text)) ids.push_back(id);
  return truncate_with_warning(std::move(ids), bundle.config.max_seq_len, "encoder");
}

std::vector<int> planner_input_ids(const ModelBundle& bundle,
                                   const std::vector<Turn>& history) {
  const int cap = std::min(bundle.config.max_history_tokens, bundle.config.max_seq_len - 1);
  std::vector<int> ids{Tokenizer::kCls};
  for (int id : bundle.tokenizer.serialize_history(history, cap)) ids.push_back(id);
  return ids;
}

GeneratorContext generator_context(const ModelBundle& bundle,
                                   const std::vector<Turn>& history) {
  GeneratorContext ctx;
  ctx.ids = bundle.tokenizer.serialize_history(history, bundle.config.max_history_tokens);
  ctx.response_row = static_cast<int>(ctx.ids.size());
  ctx.ids.push_back(Tokenizer::kSys);
  return ctx;
}

// Sharpness scale on the classification head. The head starts at zero, where
// softmax gradients are weakest; without the scale the soft mixture stays
// near-uniform for the whole training budget and codes never specialize.
constexpr double kEncoderLogitScale = 4.0;

Tape::Id encoder_pooled_node(Tape& t, EncoderModel& m, const std::vector<int>& ids,
                             int n_heads) {
  return t.slice_rows(trunk_node(t, m, ids, n_heads), 0, 1);
}

Tape::Id encoder_logits_node(Tape& t, EncoderModel& m, const std::vector<int>& ids,
                             int n_heads) {
  Tape::Id pooled = encoder_pooled_node(t, m, ids, n_heads);
  Tape::Id logits = t.add_rowvec(t.matmul(pooled, t.param(m.head_w)), t.param(m.head_b));
  return t.scale(logits, kEncoderLogitScale);
}

PlannerNodes planner_nodes(Tape& t, PlannerModel& m, const std::vector<int>& ids,
                           int n_heads) {
  PlannerNodes out;
  out.pooled = t.slice_rows(trunk_node(t, m, ids, n_heads), 0, 1);
  out.logits = t.add_rowvec(t.matmul(out.pooled, t.param(m.head_w)), t.param(m.head_b));
  return out;
}

Tape::Id q_head_node(Tape& t, PlannerModel& m, Tape::Id pooled) {
  Tape::Id h = t.gelu(t.add_rowvec(t.matmul(pooled, t.param(m.q_w1)), t.param(m.q_b1)));
  return t.add_rowvec(t.matmul(h, t.param(m.q_w2)), t.param(m.q_b2));
}

Tape::Id v_head_node(Tape& t, PlannerModel& m, Tape::Id pooled) {
  Tape::Id h = t.gelu(t.add_rowvec(t.matmul(pooled, t.param(m.v_w1)), t.param(m.v_b1)));
  return t.add_rowvec(t.matmul(h, t.param(m.v_w2)), t.param(m.v_b2));
}

Tape::Id pformer_node(Tape& t, PFormerModel& m, Tape::Id latent_row, int n_heads) {
  Tape::Id memory =
      t.add_rowvec(t.matmul(latent_row, t.param(m.mem_w)), t.param(m.mem_b));
  Tape::Id x = t.param(m.query_tokens);
  for (auto& layer : m.layers) x = nn::cross_attn_layer(t, layer, x, memory, n_heads);
  x = nn::layer_norm_p(t, m.ln_f, x);
  return t.add_rowvec(t.matmul(x, t.param(m.out_w)), t.param(m.out_b));
}

Tape::Id generator_logprobs_node(Tape& t, GeneratorModel& m, Tape::Id prefix,
                                 const std::vector<int>& text_ids, int n_heads) {
  Tape::Id tok = t.rows_gather(t.param(m.tok_embed), text_ids);
  Tape::Id pos =
      t.rows_gather(t.param(m.pos_embed), iota_ids(static_cast<int>(text_ids.size())));
  Tape::Id x = t.add(tok, pos);
  if (prefix >= 0) x = t.concat_rows({prefix, x});
  for (auto& layer : m.layers)
    x = nn::transformer_layer(t, layer, x, n_heads, /*causal=*/true);
  x = nn::layer_norm_p(t, m.ln_f, x);
  Tape::Id logits = t.add_rowvec(t.matmul(x, t.param(m.lm_w)), t.param(m.lm_b));
  return t.log_softmax_rows(logits);
}

NllNodes generator_nll_nodes(Tape& t, GeneratorModel& m, Tape::Id prefix,
                             const std::vector<int>& text_ids, int first_row,
                             const std::vector<int>& targets, int n_heads) {
  const int prefix_rows = prefix >= 0 ? static_cast<int>(t.val(prefix).rows()) : 0;
  Tape::Id lp = generator_logprobs_node(t, m, prefix, text_ids, n_heads);
  std::vector<int> rows(targets.size());
  for (size_t i = 0; i < targets.size(); ++i)
    rows[i] = prefix_rows + first_row + static_cast<int>(i);
  NllNodes out;
  out.per_token = t.pick_neg(lp, rows, targets);
  out.mean_nll = t.mean_all(out.per_token);
  out.sum_nll = t.sum_all(out.per_token);
  out.n_tokens = static_cast<int>(targets.size());
  return out;
}

PolicyDistribution encode_utterance(ModelBundle& bundle, const Turn& utterance) {
  Tape t(/*grad_enabled=*/false);
  Tape::Id logits =
      encoder_logits_node(t, bundle.encoder, encoder_input_ids(bundle, utterance), kNumHeads);
  PolicyDistribution dist;
  dist.probs = t.val(t.softmax_rows(logits)).row(0).transpose();
  return dist;
}

PolicyDistribution plan_policy(ModelBundle& bundle, const std::vector<Turn>& history) {
  Tape t(/*grad_enabled=*/false);
  PlannerNodes nodes =
      planner_nodes(t, bundle.planner, planner_input_ids(bundle, history), kNumHeads);
  PolicyDistribution dist;
  dist.probs = t.val(t.softmax_rows(nodes.logits)).row(0).transpose();
  return dist;
}

LatentPolicy mix_latent(const Codebook& codebook, const PolicyDistribution& dist) {
  if (dist.size() != codebook.K())
    throw ValidationError("mix_latent: distribution length " +
                          std::to_string(dist.size()) + " does not match K=" +
                          std::to_string(codebook.K()));
  LatentPolicy z;
  z.vector = codebook.vectors.value.transpose() * dist.probs;
  return z;
}

PolicyTokens pformer_transform(ModelBundle& bundle, const LatentPolicy& latent) {
  if (latent.vector.size() != bundle.config.d)
    throw ValidationError("pformer_transform: latent length " +
                          std::to_string(latent.vector.size()) +
                          " does not match d=" + std::to_string(bundle.config.d));
  Tape t(/*grad_enabled=*/false);
  Tape::Id z = t.constant(latent.vector.transpose());
  PolicyTokens out;
  out.tokens = t.val(pformer_node(t, bundle.pformer, z, kNumHeads));
  return out;
}

double generator_nll(ModelBundle& bundle, const PolicyTokens& policy_tokens,
                     const std::vector<Turn>& history, const Turn& target) {
  validate_turn(target, "generator target");
  const std::vector<int> words = bundle.tokenizer.encode_text(target.text);
  if (static_cast<int>(words.size()) + 1 > bundle.config.max_seq_len)
    throw ValidationError("generator_nll: target of " + std::to_string(words.size()) +
                          " tokens exceeds max_seq_len (supervised targets are never truncated)");
  GeneratorContext ctx = generator_context(bundle, history);
  std::vector<int> text = ctx.ids;
  text.insert(text.end(), words.begin(), words.end());
  if (static_cast<int>(text.size()) > bundle.config.max_seq_len)
    throw ValidationError("generator_nll: context plus target exceeds max_seq_len");
  std::vector<int> targets = words;
  targets.push_back(Tokenizer::kEos);
  Tape t(/*grad_enabled=*/false);
  Tape::Id prefix = t.constant(policy_tokens.tokens);
  NllNodes nll = generator_nll_nodes(t, bundle.generator, prefix, text,
                                     ctx.response_row, targets, kNumHeads);
  return t.val(nll.mean_nll)(0, 0);
}

Eigen::VectorXd q_values(ModelBundle& bundle, const std::vector<Turn>& history) {
  Tape t(/*grad_enabled=*/false);
  PlannerNodes nodes =
      planner_nodes(t, bundle.planner, planner_input_ids(bundle, history), kNumHeads);
  return t.val(q_head_node(t, bundle.planner, nodes.pooled)).row(0).transpose();
}

double v_value(ModelBundle& bundle, const std::vector<Turn>& history) {
  Tape t(/*grad_enabled=*/false);
  PlannerNodes nodes =
      planner_nodes(t, bundle.planner, planner_input_ids(bundle, history), kNumHeads);
  return t.val(v_head_node(t, bundle.planner, nodes.pooled))(0, 0);
}

double expected_q(const Eigen::VectorXd& qvec, const PolicyDistribution& dist) {
  if (qvec.size() != dist.probs.size())
    throw ValidationError("expected_q: length mismatch (" + std::to_string(qvec.size()) +
                          " vs " + std::to_string(dist.probs.size()) + ")");
  return qvec.dot(dist.probs);
}

void collect_params(EncoderModel& m, std::vector<nn::Parameter*>& out) {
  out.push_back(&m.tok_embed);
  out.push_back(&m.pos_embed);
  for (auto& layer : m.layers) nn::collect_params(layer, out);
  nn::collect_params(m.ln_f, out);
  out.push_back(&m.head_w);
  out.push_back(&m.head_b);
}

void collect_params(PlannerModel& m, std::vector<nn::Parameter*>& out) {
  out.push_back(&m.tok_embed);
  out.push_back(&m.pos_embed);
  for (auto& layer : m.layers) nn::collect_params(layer, out);
  nn::collect_params(m.ln_f, out);
  out.push_back(&m.head_w);
  out.push_back(&m.head_b);
  for (nn::Parameter* p : {&m.q_w1, &m.q_b1, &m.q_w2, &m.q_b2, &m.v_w1, &m.v_b1,
                           &m.v_w2, &m.v_b2})
    out.push_back(p);
}

void collect_params(PFormerModel& m, std::vector<nn::Parameter*>& out) {
  out.push_back(&m.query_tokens);
  out.push_back(&m.mem_w);
  out.push_back(&m.mem_b);
  for (auto& layer : m.layers) nn::collect_params(layer, out);
  nn::collect_params(m.ln_f, out);
  out.push_back(&m.out_w);
  out.push_back(&m.out_b);
}

void collect_params(GeneratorModel& m, std::vector<nn::Parameter*>& out) {
  out.push_back(&m.tok_embed);
  out.push_back(&m.pos_embed);
  for (auto& layer : m.layers) nn::collect_params(layer, out);
  nn::collect_params(m.ln_f, out);
  out.push_back(&m.lm_w);
  out.push_back(&m.lm_b);
}

std::vector<nn::Parameter*> all_params(ModelBundle& bundle) {
  std::vector<nn::Parameter*> out;
  collect_params(bundle.encoder, out);
  collect_params(bundle.planner, out);
  out.push_back(&bundle.codebook.vectors);
  collect_params(bundle.pformer, out);
  collect_params(bundle.generator, out);
  return out;
}

void set_trainable(GeneratorModel& m, bool trainable) {
  std::vector<nn::Parameter*> params;
  collect_params(m, params);
  for (nn::Parameter* p : params) p->trainable = trainable;
}

namespace {

void init_trunk_embeddings(nn::Parameter& tok, nn::Parameter& pos, int vocab, int d_model,
                           int max_seq_len, std::mt19937_64& rng, const std::string& prefix) {
  nn::init_matrix(tok, vocab, d_model, rng, nn::kInitStd, prefix + ".tok_embed");
  nn::init_matrix(pos, max_seq_len, d_model, rng, nn::kInitStd, prefix + ".pos_embed");
}

}  // namespace

ModelBundle init_models(const TrainConfig& config, Tokenizer tokenizer,
                        unsigned long seed) {
  config.validate();
  ModelBundle b;
  b.config = config;
  b.tokenizer = std::move(tokenizer);
  const int V = b.tokenizer.vocab_size();
  const int dm = config.d_model;
  const int ffn = 4 * dm;
  std::mt19937_64 rng(seed);

  init_trunk_embeddings(b.encoder.tok_embed, b.encoder.pos_embed, V, dm,
                        config.max_seq_len, rng, "encoder");
  b.encoder.layers.resize(kTrunkLayers);
  for (int i = 0; i < kTrunkLayers; ++i)
    nn::init_transformer_layer(b.encoder.layers[static_cast<size_t>(i)], dm, ffn, rng,
                               "encoder.layer" + std::to_string(i));
  nn::init_layer_norm(b.encoder.ln_f, dm, "encoder.ln_f");
  nn::init_zeros(b.encoder.head_w, dm, config.K, "encoder.head_w");
  nn::init_zeros(b.encoder.head_b, 1, config.K, "encoder.head_b");

  init_trunk_embeddings(b.planner.tok_embed, b.planner.pos_embed, V, dm,
                        config.max_seq_len, rng, "planner");
  b.planner.layers.resize(kTrunkLayers);
  for (int i = 0; i < kTrunkLayers; ++i)
    nn::init_transformer_layer(b.planner.layers[static_cast<size_t>(i)], dm, ffn, rng,
                               "planner.layer" + std::to_string(i));
  nn::init_layer_norm(b.planner.ln_f, dm, "planner.ln_f");
  nn::init_zeros(b.planner.head_w, dm, config.K, "planner.head_w");
  nn::init_zeros(b.planner.head_b, 1, config.K, "planner.head_b");
  nn::init_matrix(b.planner.q_w1, dm, dm, rng, nn::kInitStd, "planner.q_w1");
  nn::init_zeros(b.planner.q_b1, 1, dm, "planner.q_b1");
  nn::init_zeros(b.planner.q_w2, dm, config.K, "planner.q_w2");
  nn::init_zeros(b.planner.q_b2, 1, config.K, "planner.q_b2");
  nn::init_matrix(b.planner.v_w1, dm, dm, rng, nn::kInitStd, "planner.v_w1");
  nn::init_zeros(b.planner.v_b1, 1, dm, "planner.v_b1");
  nn::init_zeros(b.planner.v_w2, dm, 1, "planner.v_w2");
  nn::init_zeros(b.planner.v_b2, 1, 1, "planner.v_b2");

  // The latent pathway needs O(1) signal at init: with kInitStd everywhere the
  // soft mixture and its memory projection collapse to near-identical prefixes
  // for every code and the encoder receives no discriminative gradient.
  const double code_std = 1.0 / std::sqrt(static_cast<double>(config.d));
  const double mem_std = std::sqrt(2.0 / static_cast<double>(config.d + dm));
  nn::init_matrix(b.codebook.vectors, config.K, config.d, rng, code_std, "codebook");

  nn::init_matrix(b.pformer.query_tokens, config.T, dm, rng, nn::kInitStd,
                  "pformer.query_tokens");
  nn::init_matrix(b.pformer.mem_w, config.d, dm, rng, mem_std, "pformer.mem_w");
  nn::init_zeros(b.pformer.mem_b, 1, dm, "pformer.mem_b");
  b.pformer.layers.resize(static_cast<size_t>(config.L));
  for (int i = 0; i < config.L; ++i)
    nn::init_cross_attn_layer(b.pformer.layers[static_cast<size_t>(i)], dm, ffn, rng,
                              "pformer.layer" + std::to_string(i));
  nn::init_layer_norm(b.pformer.ln_f, dm, "pformer.ln_f");
  nn::init_matrix(b.pformer.out_w, dm, dm, rng, nn::kInitStd, "pformer.out_w");
  nn::init_zeros(b.pformer.out_b, 1, dm, "pformer.out_b");

  init_trunk_embeddings(b.generator.tok_embed, b.generator.pos_embed, V, dm,
                        config.max_seq_len, rng, "generator");
  b.generator.layers.resize(kTrunkLayers);
  for (int i = 0; i < kTrunkLayers; ++i)
    nn::init_transformer_layer(b.generator.layers[static_cast<size_t>(i)], dm, ffn, rng,
                               "generator.layer" + std::to_string(i));
  nn::init_layer_norm(b.generator.ln_f, dm, "generator.ln_f");
  nn::init_zeros(b.generator.lm_w, dm, V, "generator.lm_w");
  nn::init_zeros(b.generator.lm_b, 1, V, "generator.lm_b");

  return b;
}

}  // namespace ldpp
