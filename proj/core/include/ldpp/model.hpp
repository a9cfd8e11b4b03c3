#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ldpp/config.hpp"
#include "ldpp/nn/layers.hpp"
#include "ldpp/nn/tape.hpp"
#include "ldpp/tokenizer.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

// K x d table of latent policy vectors; rows are the discrete policies.
struct Codebook {
  nn::Parameter vectors;

  int K() const { return static_cast<int>(vectors.value.rows()); }
  int d() const { return static_cast<int>(vectors.value.cols()); }
};

struct LatentPolicy {
  Eigen::VectorXd vector;  // length d
};

struct PolicyTokens {
  nn::Matrix tokens;  // T x d_model
};

struct DecodeParams {
  int max_new_tokens = 16;
  bool greedy = true;  // only greedy decoding is implemented
};

struct GenerationResult {
  Turn turn;                   // role = system
  bool truncated = false;      // no stop token within max_new_tokens
  std::vector<int> token_ids;  // generated ids including the stop token
};

// Bidirectional trunk with a classification position at row 0.
struct EncoderModel {
  nn::Parameter tok_embed;  // V x d_model
  nn::Parameter pos_embed;  // max_seq_len x d_model
  std::vector<nn::TransformerLayerParams> layers;
  nn::LayerNormParams ln_f;
  nn::Parameter head_w;  // d_model x K, zero-initialized
  nn::Parameter head_b;  // 1 x K, zero-initialized
};

// Same trunk shape as the encoder (separate weights) plus policy, Q and V
// heads. Q and V are two-layer MLPs over the pooled representation.
struct PlannerModel {
  nn::Parameter tok_embed;
  nn::Parameter pos_embed;
  std::vector<nn::TransformerLayerParams> layers;
  nn::LayerNormParams ln_f;
  nn::Parameter head_w;  // d_model x K, zero-initialized
  nn::Parameter head_b;
  nn::Parameter q_w1, q_b1;  // d_model x d_model
  nn::Parameter q_w2, q_b2;  // d_model x K, zero-initialized
  nn::Parameter v_w1, v_b1;  // d_model x d_model
  nn::Parameter v_w2, v_b2;  // d_model x 1, zero-initialized
};

// T learnable queries attending to a single projected latent memory slot.
struct PFormerModel {
  nn::Parameter query_tokens;   // T x d_model
  nn::Parameter mem_w, mem_b;   // d x d_model projection of the latent
  std::vector<nn::CrossAttnLayerParams> layers;
  nn::LayerNormParams ln_f;
  nn::Parameter out_w, out_b;  // d_model x d_model final projection
};

// Causal decoder. Pretrained with plain next-token NLL, then frozen.
struct GeneratorModel {
  nn::Parameter tok_embed;
  nn::Parameter pos_embed;
  std::vector<nn::TransformerLayerParams> layers;
  nn::LayerNormParams ln_f;
  nn::Parameter lm_w;  // d_model x V, zero-initialized (uniform head at init)
  nn::Parameter lm_b;  // 1 x V
};

struct ModelBundle {
  TrainConfig config;
  Tokenizer tokenizer;
  EncoderModel encoder;
  PlannerModel planner;
  Codebook codebook;
  PFormerModel pformer;
  GeneratorModel generator;
  int stage = 0;  // last completed training stage; 0 = freshly initialized
  bool generator_frozen = false;
  std::string parent_hash;  // digest of the checkpoint this bundle came from
};

constexpr int kTrunkLayers = 2;
constexpr int kNumHeads = 4;

ModelBundle init_models(const TrainConfig& config, Tokenizer tokenizer, unsigned long seed);

void collect_params(EncoderModel& m, std::vector<nn::Parameter*>& out);
void collect_params(PlannerModel& m, std::vector<nn::Parameter*>& out);
void collect_params(PFormerModel& m, std::vector<nn::Parameter*>& out);
void collect_params(GeneratorModel& m, std::vector<nn::Parameter*>& out);
std::vector<nn::Parameter*> all_params(ModelBundle& bundle);
void set_trainable(GeneratorModel& m, bool trainable);

// Token sequence builders (shared by training and eval paths).
std::vector<int> encoder_input_ids(const ModelBundle& bundle, const Turn& utterance);
std::vector<int> planner_input_ids(const ModelBundle& bundle,
                                   const std::vector<Turn>& history);
// history serialization + <sys> marker: the teacher-forcing context for a
// system response. Returns the row where supervision starts (the marker).
struct GeneratorContext {
  std::vector<int> ids;
  int response_row = 0;  // index of the <sys> marker row within ids
};
GeneratorContext generator_context(const ModelBundle& bundle,
                                   const std::vector<Turn>& history);

// Tape builders (usable for both training and no-grad evaluation).
nn::Tape::Id encoder_pooled_node(nn::Tape& t, EncoderModel& m,
                                 const std::vector<int>& ids, int n_heads);
nn::Tape::Id encoder_logits_node(nn::Tape& t, EncoderModel& m,
                                 const std::vector<int>& ids, int n_heads);
struct PlannerNodes {
  nn::Tape::Id pooled;  // 1 x d_model
  nn::Tape::Id logits;  // 1 x K
};
PlannerNodes planner_nodes(nn::Tape& t, PlannerModel& m, const std::vector<int>& ids,
                           int n_heads);
nn::Tape::Id q_head_node(nn::Tape& t, PlannerModel& m, nn::Tape::Id pooled);
nn::Tape::Id v_head_node(nn::Tape& t, PlannerModel& m, nn::Tape::Id pooled);
nn::Tape::Id pformer_node(nn::Tape& t, PFormerModel& m, nn::Tape::Id latent_row,
                          int n_heads);
// Causal log-probabilities over [prefix rows; embedded text]. prefix < 0 means
// no prefix. Text positions are counted from 0 regardless of the prefix.
nn::Tape::Id generator_logprobs_node(nn::Tape& t, GeneratorModel& m,
                                     nn::Tape::Id prefix,
                                     const std::vector<int>& text_ids, int n_heads);
struct NllNodes {
  nn::Tape::Id per_token;  // 1 x n row of -log p(target_i)
  nn::Tape::Id mean_nll;   // 1 x 1
  nn::Tape::Id sum_nll;    // 1 x 1
  int n_tokens = 0;
};
// Supervises rows [first_row, first_row + targets.size()) of the text block
// (absolute positions shift by the prefix length automatically).
NllNodes generator_nll_nodes(nn::Tape& t, GeneratorModel& m, nn::Tape::Id prefix,
                             const std::vector<int>& text_ids, int first_row,
                             const std::vector<int>& targets, int n_heads);

// Evaluation-mode operations (deterministic, no gradients).
PolicyDistribution encode_utterance(ModelBundle& bundle, const Turn& utterance);
PolicyDistribution plan_policy(ModelBundle& bundle, const std::vector<Turn>& history);
LatentPolicy mix_latent(const Codebook& codebook, const PolicyDistribution& dist);
PolicyTokens pformer_transform(ModelBundle& bundle, const LatentPolicy& latent);
double generator_nll(ModelBundle& bundle, const PolicyTokens& policy_tokens,
                     const std::vector<Turn>& history, const Turn& target);
Eigen::VectorXd q_values(ModelBundle& bundle, const std::vector<Turn>& history);
double v_value(ModelBundle& bundle, const std::vector<Turn>& history);
double expected_q(const Eigen::VectorXd& qvec, const PolicyDistribution& dist);

// Greedy decoding with per-layer KV caches (decoder.cpp).
GenerationResult generate_response(ModelBundle& bundle, const PolicyTokens& policy_tokens,
                                   const std::vector<Turn>& history,
                                   const DecodeParams& decode);

}  // namespace ldpp
