#include "ldpp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

using nn::Tape;

const PolicyDistribution& require_label(const ModelBundle& bundle,
                                        const TrainingTuple& tuple) {
  if (!tuple.pseudo_label)
    throw ValidationError("tuple " + tuple.tuple_id() +
                          " has no pseudo_label; run labeling before this stage");
  if (tuple.pseudo_label->size() != bundle.config.K)
    throw ValidationError("tuple " + tuple.tuple_id() + " has a pseudo_label of length " +
                          std::to_string(tuple.pseudo_label->size()) +
                          ", expected K=" + std::to_string(bundle.config.K));
  return *tuple.pseudo_label;
}

double require_reward(const TrainingTuple& tuple) {
  if (!tuple.reward)
    throw ValidationError("tuple " + tuple.tuple_id() +
                          " has no reward; run annotation before this stage");
  return *tuple.reward;
}

void require_batch(const std::vector<TrainingTuple>& batch, const char* op) {
  if (batch.empty()) throw ValidationError(std::string(op) + ": empty batch");
}

Tape::Id mean_of(Tape& t, const std::vector<Tape::Id>& terms) {
  if (terms.empty()) return t.constant(nn::Matrix::Zero(1, 1));
  return t.mean_all(t.concat_cols(terms));
}

// -sum_k label_k * log p(k) from a live 1 x K log-probability row.
Tape::Id soft_ce_node(Tape& t, const Eigen::VectorXd& label, Tape::Id logprobs) {
  Tape::Id label_row = t.constant(label.transpose());
  return t.scale(t.sum_all(t.hadamard(label_row, logprobs)), -1.0);
}

double neg_entropy(const Eigen::VectorXd& p) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) acc += p(k) * std::log(p(k));
  return acc;
}

// Per-tuple reconstruction target: teacher-forced rows of u_t^sys.
struct ReconstructionPlan {
  std::vector<int> text;
  std::vector<int> targets;
  int first_row = 0;
};

ReconstructionPlan reconstruction_plan(const ModelBundle& bundle,
                                       const TrainingTuple& tuple) {
  const std::vector<int> words = bundle.tokenizer.encode_text(tuple.sys_utterance.text);
  if (static_cast<int>(words.size()) + 1 > bundle.config.max_seq_len)
    throw ValidationError("tuple " + tuple.tuple_id() + ": target of " +
                          std::to_string(words.size()) +
                          " tokens exceeds max_seq_len (targets are never truncated)");
  GeneratorContext ctx = generator_context(bundle, tuple.history);
  ReconstructionPlan plan;
  plan.text = std::move(ctx.ids);
  plan.first_row = ctx.response_row;
  plan.text.insert(plan.text.end(), words.begin(), words.end());
  if (static_cast<int>(plan.text.size()) > bundle.config.max_seq_len)
    throw ValidationError("tuple " + tuple.tuple_id() +
                          ": context plus target exceeds max_seq_len");
  plan.targets = words;
  plan.targets.push_back(Tokenizer::kEos);
  return plan;
}

Tape::Id pseudo_label_prefix_node(Tape& t, ModelBundle& bundle,
                                  const Eigen::VectorXd& label) {
  Tape::Id z =
      t.matmul(t.constant(label.transpose()), t.param(bundle.codebook.vectors));
  return pformer_node(t, bundle.pformer, z, kNumHeads);
}

void check_finite(Tape& t, Tape::Id node, const std::vector<TrainingTuple>& batch,
                  const char* op) {
  const double v = t.val(node)(0, 0);
  if (std::isfinite(v)) return;
  std::ostringstream ids;
  for (const TrainingTuple& tuple : batch) ids << ' ' << tuple.tuple_id();
  throw RuntimeFailure(std::string(op) + " produced a non-finite value (" +
                       std::to_string(v) + "); offending batch:" + ids.str());
}

}  // namespace

double expectile_loss(double q, double v, double tau_expectile) {
  if (!(tau_expectile > 0.0 && tau_expectile < 1.0))
    throw ValidationError("expectile_loss: tau must lie in (0,1)");
  const double u = q - v;
  const double w = std::abs(tau_expectile - (u < 0.0 ? 1.0 : 0.0));
  return w * u * u;
}

double q_td_loss(double q, double reward, double v_next, double gamma,
                 bool is_terminal) {
  const double bootstrap = is_terminal ? 0.0 : v_next;
  const double e = reward + gamma * bootstrap - q;
  return e * e;
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ValidationError("kl_divergence: length mismatch");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) acc += p(k) * (std::log(p(k)) - std::log(q(k)));
  return acc;
}

double clamped_exp_weight(double x, double clip) {
  return std::min(std::exp(x), clip);
}

double advantage(ModelBundle& bundle, const std::vector<Turn>& history,
                 const PolicyDistribution& pseudo_label) {
  const Eigen::VectorXd qvec = q_values(bundle, history);
  const double v = v_value(bundle, history);
  if (bundle.config.q_input_mode == QInputMode::argmax)
    return qvec(argmax_lowest(pseudo_label.probs)) - v;
  return expected_q(qvec, pseudo_label) - v;
}

namespace {

// Shared by the public reconstruction op and the stage-1 trainer (which also
// needs the encoder distributions for the usage-balance term).
Tape::Id reconstruction_terms(Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch,
                              std::vector<Tape::Id>* prob_rows) {
  std::vector<Tape::Id> terms;
  terms.reserve(batch.size());
  for (const TrainingTuple& tuple : batch) {
    Tape::Id logits = encoder_logits_node(
        t, bundle.encoder, encoder_input_ids(bundle, tuple.sys_utterance), kNumHeads);
    Tape::Id probs = t.softmax_rows(logits);
    if (prob_rows) prob_rows->push_back(probs);
    Tape::Id z = t.matmul(probs, t.param(bundle.codebook.vectors));
    Tape::Id prefix = pformer_node(t, bundle.pformer, z, kNumHeads);
    const ReconstructionPlan plan = reconstruction_plan(bundle, tuple);
    terms.push_back(generator_nll_nodes(t, bundle.generator, prefix, plan.text,
                                        plan.first_row, plan.targets, kNumHeads)
                        .mean_nll);
  }
  return mean_of(t, terms);
}

}  // namespace

Tape::Id stage1_loss_node(Tape& t, ModelBundle& bundle,
                          const std::vector<TrainingTuple>& batch) {
  require_batch(batch, "stage1_loss");
  Tape::Id loss = reconstruction_terms(t, bundle, batch, nullptr);
  check_finite(t, loss, batch, "stage1_loss");
  return loss;
}

Stage1Nodes stage1_train_nodes(Tape& t, ModelBundle& bundle,
                               const std::vector<TrainingTuple>& batch) {
  require_batch(batch, "stage1_train");
  std::vector<Tape::Id> prob_rows;
  Stage1Nodes out;
  out.l_con = reconstruction_terms(t, bundle, batch, &prob_rows);
  const double b = static_cast<double>(prob_rows.size());
  // mean_i H(p_i): zero once every utterance commits to one code.
  Tape::Id all = t.concat_rows(prob_rows);
  Tape::Id plogp = t.hadamard(all, t.log(t.add_scalar(all, 1e-12)));
  Tape::Id commit = t.scale(t.sum_all(plogp), -1.0 / b);
  out.l_commit = commit;
  out.usage =
      t.matmul(t.constant(nn::Matrix::Constant(1, static_cast<Eigen::Index>(b), 1.0 / b)), all);
  check_finite(t, out.l_con, batch, "stage1_loss");
  check_finite(t, out.l_commit, batch, "stage1_commitment");
  return out;
}

double stage1_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch) {
  Tape t(/*grad_enabled=*/false);
  return t.val(stage1_loss_node(t, bundle, batch))(0, 0);
}

Tape::Id distill_loss_node(Tape& t, ModelBundle& bundle,
                           const std::vector<TrainingTuple>& batch, double delta) {
  require_batch(batch, "distill_loss");
  std::vector<Tape::Id> terms;
  for (const TrainingTuple& tuple : batch) {
    const Eigen::VectorXd& label = require_label(bundle, tuple).probs;
    if (!(require_reward(tuple) > delta)) continue;
    PlannerNodes nodes = planner_nodes(t, bundle.planner,
                                       planner_input_ids(bundle, tuple.history), kNumHeads);
    Tape::Id ce = soft_ce_node(t, label, t.log_softmax_rows(nodes.logits));
    terms.push_back(t.add_scalar(ce, neg_entropy(label)));
  }
  return mean_of(t, terms);
}

double distill_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch) {
  Tape t(/*grad_enabled=*/false);
  return t.val(distill_loss_node(t, bundle, batch, bundle.config.delta))(0, 0);
}

QVBatchAux compute_qv_aux(ModelBundle& bundle, const std::vector<TrainingTuple>& batch) {
  QVBatchAux aux;
  aux.q_detached.reserve(batch.size());
  aux.v_next.reserve(batch.size());
  for (const TrainingTuple& tuple : batch) {
    const PolicyDistribution& label = require_label(bundle, tuple);
    require_reward(tuple);
    const Eigen::VectorXd qvec = q_values(bundle, tuple.history);
    aux.q_detached.push_back(bundle.config.q_input_mode == QInputMode::argmax
                                 ? qvec(argmax_lowest(label.probs))
                                 : expected_q(qvec, label));
    aux.v_next.push_back(tuple.is_terminal ? 0.0 : v_value(bundle, tuple.next_history));
  }
  return aux;
}

namespace {

struct TupleValueNodes {
  Tape::Id l_q;
  Tape::Id l_v;
};

// Builds both value losses for one tuple from a detached pooled representation.
TupleValueNodes tuple_value_nodes(Tape& t, ModelBundle& bundle,
                                  const TrainingTuple& tuple, Tape::Id pooled_const,
                                  double q_detached, double v_next) {
  const PolicyDistribution& label = *tuple.pseudo_label;
  Tape::Id q_row = q_head_node(t, bundle.planner, pooled_const);
  Tape::Id q_z = bundle.config.q_input_mode == QInputMode::argmax
                     ? t.slice_cols(q_row, argmax_lowest(label.probs), 1)
                     : t.matmul_nt(q_row, t.constant(label.probs.transpose()));
  Tape::Id v = v_head_node(t, bundle.planner, pooled_const);

  const double u_val = q_detached - t.val(v)(0, 0);
  const double w = std::abs(bundle.config.tau_expectile - (u_val < 0.0 ? 1.0 : 0.0));
  Tape::Id u = t.sub(t.constant(nn::Matrix::Constant(1, 1, q_detached)), v);
  TupleValueNodes out;
  out.l_v = t.scale(t.hadamard(u, u), w);

  const double target = *tuple.reward + bundle.config.gamma * v_next;
  Tape::Id e = t.sub(q_z, t.constant(nn::Matrix::Constant(1, 1, target)));
  out.l_q = t.hadamard(e, e);
  return out;
}

}  // namespace

QVNodes qv_loss_nodes(Tape& t, ModelBundle& bundle,
                      const std::vector<TrainingTuple>& batch, const QVBatchAux& aux) {
  require_batch(batch, "qv_loss");
  std::vector<Tape::Id> q_terms, v_terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    require_label(bundle, batch[i]);
    require_reward(batch[i]);
    PlannerNodes nodes = planner_nodes(
        t, bundle.planner, planner_input_ids(bundle, batch[i].history), kNumHeads);
    Tape::Id pooled_const = t.constant(t.val(nodes.pooled));
    TupleValueNodes tv = tuple_value_nodes(t, bundle, batch[i], pooled_const,
                                           aux.q_detached[i], aux.v_next[i]);
    q_terms.push_back(tv.l_q);
    v_terms.push_back(tv.l_v);
  }
  return QVNodes{mean_of(t, q_terms), mean_of(t, v_terms)};
}

Tape::Id awr_planner_loss_node(Tape& t, ModelBundle& bundle,
                               const std::vector<TrainingTuple>& batch, double tau_awr,
                               const std::vector<double>& advantages) {
  require_batch(batch, "awr_planner_loss");
  std::vector<Tape::Id> terms;
  terms.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd& label = require_label(bundle, batch[i]).probs;
    PlannerNodes nodes = planner_nodes(
        t, bundle.planner, planner_input_ids(bundle, batch[i].history), kNumHeads);
    Tape::Id ce = soft_ce_node(t, label, t.log_softmax_rows(nodes.logits));
    terms.push_back(
        t.scale(ce, clamped_exp_weight(tau_awr * advantages[i], bundle.config.exp_clip)));
  }
  return mean_of(t, terms);
}

std::vector<double> compute_advantages(ModelBundle& bundle,
                                       const std::vector<TrainingTuple>& batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const TrainingTuple& tuple : batch)
    out.push_back(advantage(bundle, tuple.history, require_label(bundle, tuple)));
  return out;
}

double awr_planner_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch,
                        double tau_awr) {
  const std::vector<double> advantages = compute_advantages(bundle, batch);
  Tape t(/*grad_enabled=*/false);
  return t.val(awr_planner_loss_node(t, bundle, batch, tau_awr, advantages))(0, 0);
}

Tape::Id token_reinforce_loss_node(Tape& t, ModelBundle& bundle,
                                   const std::vector<TrainingTuple>& batch,
                                   const std::vector<double>& advantages) {
  require_batch(batch, "token_reinforce_loss");
  std::vector<Tape::Id> terms;
  terms.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd& label = require_label(bundle, batch[i]).probs;
    Tape::Id prefix = pseudo_label_prefix_node(t, bundle, label);
    const ReconstructionPlan plan = reconstruction_plan(bundle, batch[i]);
    Tape::Id nll_sum = generator_nll_nodes(t, bundle.generator, prefix, plan.text,
                                           plan.first_row, plan.targets, kNumHeads)
                           .sum_nll;
    terms.push_back(
        t.scale(nll_sum, clamped_exp_weight(advantages[i], bundle.config.exp_clip)));
  }
  Tape::Id loss = mean_of(t, terms);
  check_finite(t, loss, batch, "token_reinforce_loss");
  return loss;
}

double token_reinforce_loss(ModelBundle& bundle,
                            const std::vector<TrainingTuple>& batch) {
  const std::vector<double> advantages = compute_advantages(bundle, batch);
  Tape t(/*grad_enabled=*/false);
  return t.val(token_reinforce_loss_node(t, bundle, batch, advantages))(0, 0);
}

Stage2Nodes stage2_loss_nodes(Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch, double delta,
                              const QVBatchAux& aux) {
  require_batch(batch, "stage2_loss");
  std::vector<Tape::Id> kl_terms, q_terms, v_terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainingTuple& tuple = batch[i];
    const Eigen::VectorXd& label = require_label(bundle, tuple).probs;
    const double reward = require_reward(tuple);

    PlannerNodes nodes = planner_nodes(t, bundle.planner,
                                       planner_input_ids(bundle, tuple.history), kNumHeads);
    if (reward > delta) {
      Tape::Id ce = soft_ce_node(t, label, t.log_softmax_rows(nodes.logits));
      kl_terms.push_back(t.add_scalar(ce, neg_entropy(label)));
    }
    Tape::Id pooled_const = t.constant(t.val(nodes.pooled));
    TupleValueNodes tv = tuple_value_nodes(t, bundle, tuple, pooled_const,
                                           aux.q_detached[i], aux.v_next[i]);
    q_terms.push_back(tv.l_q);
    v_terms.push_back(tv.l_v);
  }
  return Stage2Nodes{mean_of(t, kl_terms), mean_of(t, q_terms), mean_of(t, v_terms)};
}

Stage3Aux compute_stage3_aux(ModelBundle& bundle,
                             const std::vector<TrainingTuple>& batch) {
  Stage3Aux aux;
  aux.qv = compute_qv_aux(bundle, batch);
  aux.advantages.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    // Same Q input as the value losses; V comes from the live head.
    aux.advantages.push_back(aux.qv.q_detached[i] -
                             v_value(bundle, batch[i].history));
  }
  return aux;
}

Stage3Nodes stage3_loss_nodes(Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch,
                              const Stage3Aux& aux) {
  require_batch(batch, "stage3_loss");
  std::vector<Tape::Id> high_terms, low_terms, q_terms, v_terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TrainingTuple& tuple = batch[i];
    const Eigen::VectorXd& label = require_label(bundle, tuple).probs;
    require_reward(tuple);

    PlannerNodes nodes = planner_nodes(t, bundle.planner,
                                       planner_input_ids(bundle, tuple.history), kNumHeads);
    Tape::Id ce = soft_ce_node(t, label, t.log_softmax_rows(nodes.logits));
    high_terms.push_back(t.scale(
        ce, clamped_exp_weight(bundle.config.tau_awr * aux.advantages[i],
                               bundle.config.exp_clip)));

    Tape::Id pooled_const = t.constant(t.val(nodes.pooled));
    TupleValueNodes tv = tuple_value_nodes(t, bundle, tuple, pooled_const,
                                           aux.qv.q_detached[i], aux.qv.v_next[i]);
    q_terms.push_back(tv.l_q);
    v_terms.push_back(tv.l_v);

    Tape::Id prefix = pseudo_label_prefix_node(t, bundle, label);
    const ReconstructionPlan plan = reconstruction_plan(bundle, tuple);
    Tape::Id nll_sum = generator_nll_nodes(t, bundle.generator, prefix, plan.text,
                                           plan.first_row, plan.targets, kNumHeads)
                           .sum_nll;
    low_terms.push_back(t.scale(
        nll_sum, clamped_exp_weight(aux.advantages[i], bundle.config.exp_clip)));
  }
  Stage3Nodes out;
  out.l_high = mean_of(t, high_terms);
  out.l_low = mean_of(t, low_terms);
  out.l_q = mean_of(t, q_terms);
  out.l_v = mean_of(t, v_terms);
  check_finite(t, out.l_low, batch, "stage3_loss");
  return out;
}

}  // namespace ldpp
