#pragma once

#include <vector>

#include "ldpp/model.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

// Asymmetric squared error |tau - 1[u<0]| * u^2 with u = q - v; q is treated
// as a constant (only the value estimate regresses toward the expectile).
double expectile_loss(double q, double v, double tau_expectile);

// Squared TD error (r + gamma * v_next - q)^2; terminal transitions bootstrap
// from zero. v_next is a constant target.
double q_td_loss(double q, double reward, double v_next, double gamma, bool is_terminal);

// Natural-log KL(p || q); zero entries of p contribute nothing.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// min(exp(x), clip): the advantage weight used by both Stage-3 objectives.
double clamped_exp_weight(double x, double clip);

// Q(h, label) - V(h) with the Q input chosen by config.q_input_mode.
double advantage(ModelBundle& bundle, const std::vector<Turn>& history,
                 const PolicyDistribution& pseudo_label);

// Reconstruction: mean over the batch of the per-token mean NLL of u_t^sys
// under the policy prefix derived from the utterance's own encoding.
nn::Tape::Id stage1_loss_node(nn::Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch);
double stage1_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch);

// Stage-1 training objective: the reconstruction term plus a commitment
// regularizer mean_i H(p_i) that drives every utterance toward one code, and
// the batch-mean code usage (a live 1 x K simplex row) from which the trainer
// builds a balance penalty against a running usage estimate. Balance must be
// computed across steps: a single batch of B < K rows cannot cover the
// codebook, so penalizing the raw batch mean just rewards hedged assignments.
struct Stage1Nodes {
  nn::Tape::Id l_con;
  nn::Tape::Id l_commit;
  nn::Tape::Id usage;
};
Stage1Nodes stage1_train_nodes(nn::Tape& t, ModelBundle& bundle,
                               const std::vector<TrainingTuple>& batch);

// Mean KL(pseudo_label || planner) over tuples with reward > delta; an empty
// survivor set contributes exactly zero.
nn::Tape::Id distill_loss_node(nn::Tape& t, ModelBundle& bundle,
                               const std::vector<TrainingTuple>& batch, double delta);
double distill_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch);

// Everything under a stop-gradient in the value losses, computed in eval mode
// before graph construction so both training and finite differences treat the
// numbers as constants. Recomputed per batch: bootstraps track the live heads.
struct QVBatchAux {
  std::vector<double> q_detached;  // Q(h_t, label_t), target input of L_V
  std::vector<double> v_next;      // V(h_{t+1}), zero for terminal tuples
};
QVBatchAux compute_qv_aux(ModelBundle& bundle, const std::vector<TrainingTuple>& batch);

struct QVNodes {
  nn::Tape::Id l_q;  // mean squared TD error
  nn::Tape::Id l_v;  // mean expectile loss
};
QVNodes qv_loss_nodes(nn::Tape& t, ModelBundle& bundle,
                      const std::vector<TrainingTuple>& batch, const QVBatchAux& aux);

// Advantage-weighted soft cross-entropy of the planner against pseudo-labels.
// advantages are detached (one entry per tuple).
nn::Tape::Id awr_planner_loss_node(nn::Tape& t, ModelBundle& bundle,
                                   const std::vector<TrainingTuple>& batch,
                                   double tau_awr, const std::vector<double>& advantages);
double awr_planner_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch,
                        double tau_awr);

// Advantage-weighted teacher-forced NLL of u_t^sys, summed over tokens, with
// the latent mixed from the pseudo-label. Gradients reach the policy adapter
// only (generator frozen; codebook per config flag).
nn::Tape::Id token_reinforce_loss_node(nn::Tape& t, ModelBundle& bundle,
                                       const std::vector<TrainingTuple>& batch,
                                       const std::vector<double>& advantages);
double token_reinforce_loss(ModelBundle& bundle, const std::vector<TrainingTuple>& batch);

std::vector<double> compute_advantages(ModelBundle& bundle,
                                       const std::vector<TrainingTuple>& batch);

// Stage 2 shares one planner forward per tuple across the KL and value terms;
// values are identical to the standalone builders (covered by tests).
struct Stage2Nodes {
  nn::Tape::Id l_kl;
  nn::Tape::Id l_q;
  nn::Tape::Id l_v;
};
Stage2Nodes stage2_loss_nodes(nn::Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch, double delta,
                              const QVBatchAux& aux);

// Stage 3 builds all four terms from one planner forward per tuple; values
// are identical to the standalone builders above (covered by tests).
struct Stage3Aux {
  std::vector<double> advantages;
  QVBatchAux qv;
};
Stage3Aux compute_stage3_aux(ModelBundle& bundle, const std::vector<TrainingTuple>& batch);

struct Stage3Nodes {
  nn::Tape::Id l_high;
  nn::Tape::Id l_low;
  nn::Tape::Id l_q;
  nn::Tape::Id l_v;
};
Stage3Nodes stage3_loss_nodes(nn::Tape& t, ModelBundle& bundle,
                              const std::vector<TrainingTuple>& batch,
                              const Stage3Aux& aux);

}  // namespace ldpp
