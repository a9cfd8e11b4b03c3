#pragma once

#include <random>
#include <vector>

#include "ldpp/nn/tape.hpp"

namespace ldpp::nn {

struct LayerNormParams {
  Parameter gain;  // 1 x d
  Parameter bias;  // 1 x d
};

struct AttentionParams {
  Parameter wq, bq;
  Parameter wk, bk;
  Parameter wv, bv;
  Parameter wo, bo;
};

struct FfnParams {
  Parameter w1, b1;  // d -> d_ffn
  Parameter w2, b2;  // d_ffn -> d
};

// Pre-norm block: x + attn(ln1(x)), then x + ffn(ln2(x)).
struct TransformerLayerParams {
  LayerNormParams ln1;
  AttentionParams attn;
  LayerNormParams ln2;
  FfnParams ffn;
};

// Same plus a cross-attention sub-block reading an external memory.
struct CrossAttnLayerParams {
  LayerNormParams ln1;
  AttentionParams self_attn;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  LayerNormParams ln2;
  FfnParams ffn;
};

// Builders take mutable params because the tape registers leaves for the
// gradient flush; forward evaluation itself never writes them.
// queries: S x d (already normed); keys/values derived from kv_src: M x d.
Tape::Id attention(Tape& t, AttentionParams& p, Tape::Id queries,
                   Tape::Id kv_src, int n_heads, bool causal);

Tape::Id ffn(Tape& t, FfnParams& p, Tape::Id x);

Tape::Id transformer_layer(Tape& t, TransformerLayerParams& p, Tape::Id x,
                           int n_heads, bool causal);

// memory: 1 x d row (or M x d); self-attention over x is bidirectional.
Tape::Id cross_attn_layer(Tape& t, CrossAttnLayerParams& p, Tape::Id x,
                          Tape::Id memory, int n_heads);

Tape::Id layer_norm_p(Tape& t, LayerNormParams& p, Tape::Id x);

// Initialization. Weights ~ N(0, std), biases zero, layer norm identity.
void init_matrix(Parameter& p, int rows, int cols, std::mt19937_64& rng,
                 double std_dev, const std::string& name);
void init_zeros(Parameter& p, int rows, int cols, const std::string& name);
void init_ones(Parameter& p, int rows, int cols, const std::string& name);
void init_layer_norm(LayerNormParams& p, int d, const std::string& prefix);
void init_attention(AttentionParams& p, int d, std::mt19937_64& rng,
                    const std::string& prefix);
void init_ffn(FfnParams& p, int d, int d_ffn, std::mt19937_64& rng,
              const std::string& prefix);
void init_transformer_layer(TransformerLayerParams& p, int d, int d_ffn,
                            std::mt19937_64& rng, const std::string& prefix);
void init_cross_attn_layer(CrossAttnLayerParams& p, int d, int d_ffn,
                           std::mt19937_64& rng, const std::string& prefix);

void collect_params(LayerNormParams& p, std::vector<Parameter*>& out);
void collect_params(AttentionParams& p, std::vector<Parameter*>& out);
void collect_params(FfnParams& p, std::vector<Parameter*>& out);
void collect_params(TransformerLayerParams& p, std::vector<Parameter*>& out);
void collect_params(CrossAttnLayerParams& p, std::vector<Parameter*>& out);

constexpr double kInitStd = 0.02;

}  // namespace ldpp::nn
