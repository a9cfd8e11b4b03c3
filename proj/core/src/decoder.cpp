#include <cmath>
#include <vector>

#include "ldpp/error.hpp"
#include "ldpp/model.hpp"

namespace ldpp {

namespace {

constexpr double kLnEps = 1e-5;  // must match the tape's layer_norm default

using Row = Eigen::RowVectorXd;

Row ln_row(const Row& x, const nn::Parameter& gain, const nn::Parameter& bias) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double invstd = 1.0 / std::sqrt(var + kLnEps);
  return (((x.array() - mean) * invstd).matrix().cwiseProduct(gain.value.row(0)) +
          bias.value.row(0));
}

Row ffn_row(const nn::FfnParams& p, const Row& x) {
  Row h = x * p.w1.value + p.b1.value.row(0);
  h = h.unaryExpr([](double v) { return nn::gelu_scalar(v); });
  return h * p.w2.value + p.b2.value.row(0);
}

struct LayerCache {
  nn::Matrix k;  // rows appended as decoding advances
  nn::Matrix v;
};

void append_row(nn::Matrix& m, const Row& r) {
  m.conservativeResize(m.rows() + 1, r.cols());
  m.row(m.rows() - 1) = r;
}

// Advances one causal layer by one position, extending its KV cache.
Row layer_step(const nn::TransformerLayerParams& p, LayerCache& cache, Row x,
               int n_heads) {
  const Row normed = ln_row(x, p.ln1.gain, p.ln1.bias);
  const Row q = normed * p.attn.wq.value + p.attn.bq.value.row(0);
  append_row(cache.k, normed * p.attn.wk.value + p.attn.bk.value.row(0));
  append_row(cache.v, normed * p.attn.wv.value + p.attn.bv.value.row(0));

  const int d = static_cast<int>(q.cols());
  const int hd = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Row ctx(d);
  for (int h = 0; h < n_heads; ++h) {
    Eigen::VectorXd scores =
        cache.k.middleCols(h * hd, hd) * q.middleCols(h * hd, hd).transpose();
    scores *= inv_sqrt;
    const double m = scores.maxCoeff();
    Eigen::VectorXd probs = (scores.array() - m).exp();
    probs /= probs.sum();
    ctx.middleCols(h * hd, hd) = probs.transpose() * cache.v.middleCols(h * hd, hd);
  }
  x += ctx * p.attn.wo.value + p.attn.bo.value.row(0);
  x += ffn_row(p.ffn, ln_row(x, p.ln2.gain, p.ln2.bias));
  return x;
}

}  // namespace

GenerationResult generate_response(ModelBundle& bundle, const PolicyTokens& policy_tokens,
                                   const std::vector<Turn>& history,
                                   const DecodeParams& decode) {
  if (decode.max_new_tokens <= 0)
    throw ValidationError("generate_response: max_new_tokens must be positive");
  if (!decode.greedy)
    throw ValidationError("generate_response: only greedy decoding is implemented");
  const TrainConfig& cfg = bundle.config;
  if (policy_tokens.tokens.rows() != cfg.T || policy_tokens.tokens.cols() != cfg.d_model)
    throw ValidationError("generate_response: policy tokens have wrong shape");

  GeneratorModel& g = bundle.generator;
  std::vector<LayerCache> caches(g.layers.size());
  GeneratorContext ctx = generator_context(bundle, history);

  auto feed = [&](Row x) -> Row {
    for (size_t l = 0; l < g.layers.size(); ++l)
      x = layer_step(g.layers[l], caches[l], std::move(x), kNumHeads);
    return x;
  };
  auto logits_of = [&](const Row& x) -> Row {
    return ln_row(x, g.ln_f.gain, g.ln_f.bias) * g.lm_w.value + g.lm_b.value.row(0);
  };

  // Prefill: policy prefix rows carry no positional embedding; text restarts
  // its position count at 0.
  Row last;
  for (Eigen::Index i = 0; i < policy_tokens.tokens.rows(); ++i)
    last = feed(policy_tokens.tokens.row(i));
  for (size_t i = 0; i < ctx.ids.size(); ++i)
    last = feed(g.tok_embed.value.row(ctx.ids[i]) +
                g.pos_embed.value.row(static_cast<Eigen::Index>(i)));

  GenerationResult out;
  int pos = static_cast<int>(ctx.ids.size());
  for (int step = 0; step < decode.max_new_tokens; ++step) {
    const Row logits = logits_of(last);
    const int next = argmax_lowest(logits.transpose());
    out.token_ids.push_back(next);
    if (next == Tokenizer::kEos) break;
    if (pos >= cfg.max_seq_len) {
      out.truncated = true;
      break;
    }
    last = feed(g.tok_embed.value.row(next) + g.pos_embed.value.row(pos));
    ++pos;
  }
  if (out.token_ids.empty() || out.token_ids.back() != Tokenizer::kEos)
    out.truncated = true;

  const std::string text = bundle.tokenizer.decode_words(out.token_ids);
  if (text.empty())
    throw RuntimeFailure("generate_response: decoder produced no words before stopping");
  out.turn = Turn{Role::system, text};
  return out;
}

}  // namespace ldpp
