#include "ldpp/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ldpp/checkpoint.hpp"
#include "ldpp/error.hpp"
#include "ldpp/manifest.hpp"
#include "ldpp/nn/adam.hpp"

namespace ldpp {

namespace fs = std::filesystem;

nlohmann::json LossReport::to_json() const {
  nlohmann::json j{{"stage", stage}, {"epoch", epoch}, {"step", step}, {"total", total}};
  for (const auto& [name, value] : parts) j[name] = value;
  return j;
}

namespace {

// Schedule of the stage-1 assignment regularizers (see stage1_train_nodes).
// Balance ramps to its peak over the first epoch, holds through the soft
// phase, then decays to zero over the last 40% of training: dead codes need a
// standing push back into use while clusters form, but once hardening starts
// the same push keeps low-quality straddling codes alive. Commitment anneals
// linearly across the whole run, soft-to-hard: the clusters form while
// assignments are still soft and reconstruction-driven, and only harden once
// the partition is in place. Hardening too early starves the codebook
// (assignments freeze before codes differentiate), never hardening leaves
// argmax labels meaningless.
constexpr double kStage1CommitWeight = 1.0;
constexpr double kStage1BalanceWeight = 0.5;
constexpr double kStage1BalanceHold = 0.6;

class LossWriter {
 public:
  LossWriter(const fs::path& dir, const std::string& name,
             std::vector<std::string> columns)
      : columns_(std::move(columns)) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    jsonl_.open(dir / (name + "_losses.jsonl"));
    csv_.open(dir / (name + "_losses.csv"));
    if (!jsonl_ || !csv_)
      throw RuntimeFailure("cannot open loss logs under " + dir.string());
    csv_ << "stage,epoch,step";
    for (const std::string& c : columns_) csv_ << ',' << c;
    csv_ << ",total\n";
  }

  void write(const LossReport& r) {
    if (!jsonl_.is_open()) return;
    jsonl_ << r.to_json().dump() << '\n';
    csv_ << r.stage << ',' << r.epoch << ',' << r.step;
    for (const std::string& c : columns_) {
      const auto it =
          std::find_if(r.parts.begin(), r.parts.end(),
                       [&](const auto& kv) { return kv.first == c; });
      if (it == r.parts.end())
        throw std::logic_error("loss report is missing part " + c);
      csv_ << ',' << format_double(it->second);
    }
    csv_ << ',' << format_double(r.total) << '\n';
  }

 private:
  std::vector<std::string> columns_;
  std::ofstream jsonl_;
  std::ofstream csv_;
};

LossReport make_report(int stage, int epoch, long step,
                       std::vector<std::pair<std::string, double>> parts) {
  LossReport r;
  r.stage = stage;
  r.epoch = epoch;
  r.step = step;
  r.parts = std::move(parts);
  for (const auto& [name, value] : r.parts) {
    if (!std::isfinite(value))
      throw RuntimeFailure("non-finite " + name + " at stage " + std::to_string(stage) +
                           " step " + std::to_string(step));
    r.total += value;
  }
  return r;
}

std::vector<size_t> epoch_order(size_t n, long long seed, int stage, int epoch) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::seed_seq seq{seed, static_cast<long long>(stage), static_cast<long long>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<TrainingTuple> gather_batch(const std::vector<TrainingTuple>& tuples,
                                        const std::vector<size_t>& order, size_t at,
                                        size_t batch_size) {
  std::vector<TrainingTuple> batch;
  const size_t end = std::min(at + batch_size, order.size());
  batch.reserve(end - at);
  for (size_t i = at; i < end; ++i) batch.push_back(tuples[order[i]]);
  return batch;
}

long steps_per_epoch(size_t n, int batch_size) {
  return static_cast<long>((n + static_cast<size_t>(batch_size) - 1) /
                           static_cast<size_t>(batch_size));
}

void maybe_save(ModelBundle& bundle, const TrainOptions& options,
                const std::string& name, int epochs_done) {
  if (options.checkpoint_dir.empty()) return;
  save_checkpoint(bundle, options.checkpoint_dir / name, epochs_done);
}

void set_component_trainable(std::vector<nn::Parameter*> params, bool trainable) {
  for (nn::Parameter* p : params) p->trainable = trainable;
}

void require_labels_and_rewards(const std::vector<TrainingTuple>& tuples, int K) {
  for (const TrainingTuple& t : tuples) {
    if (!t.reward)
      throw ValidationError("tuple " + t.tuple_id() +
                            " has no reward; annotate the corpus before this stage");
    if (!t.pseudo_label)
      throw ValidationError("tuple " + t.tuple_id() +
                            " has no pseudo_label; run labeling before this stage");
    if (t.pseudo_label->size() != K)
      throw ValidationError("tuple " + t.tuple_id() + " has a pseudo_label of length " +
                            std::to_string(t.pseudo_label->size()) + ", expected K=" +
                            std::to_string(K));
  }
}

// The encoder starts random, so every utterance pools to nearly the same
// vector and early code assignments carry no input information; whatever
// partition forms in that regime is arbitrary, and commitment hardens it. A
// short bag-of-words prediction pass separates the pooled space by content
// before any code is assigned (the stand-in for starting from a pretrained
// text encoder). The projection head is local and discarded afterwards.
void pretrain_encoder(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                      const TrainOptions& options) {
  const TrainConfig& cfg = bundle.config;
  const int vocab = bundle.tokenizer.vocab_size();
  std::seed_seq seq{cfg.seed, static_cast<long long>(181)};
  std::mt19937_64 rng(seq);
  nn::Parameter bag_w;
  nn::Parameter bag_b;
  nn::init_matrix(bag_w, cfg.d, vocab, rng, nn::kInitStd, "encoder.bag_w");
  nn::init_zeros(bag_b, 1, vocab, "encoder.bag_b");
  std::vector<nn::Parameter*> params;
  collect_params(bundle.encoder, params);
  params.push_back(&bag_w);
  params.push_back(&bag_b);
  nn::Adam adam;
  LossWriter writer(options.log_dir, "pretrain_encoder", {"l_bag"});

  const long total_steps =
      cfg.gen_pretrain_epochs * steps_per_epoch(tuples.size(), cfg.batch_size);
  long step = 0;
  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.gen_pretrain_epochs && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(tuples.size(), cfg.seed, -1, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stopped = true;
        break;
      }
      nn::Tape t;
      std::vector<nn::Tape::Id> terms;
      const size_t end = std::min(at + static_cast<size_t>(cfg.batch_size), order.size());
      for (size_t i = at; i < end; ++i) {
        const TrainingTuple& tuple = tuples[order[i]];
        const std::vector<int> words =
            bundle.tokenizer.encode_text(tuple.sys_utterance.text);
        if (words.empty()) continue;
        Eigen::RowVectorXd bag = Eigen::RowVectorXd::Zero(vocab);
        for (int id : words) bag(id) += 1.0;
        bag /= static_cast<double>(words.size());
        nn::Tape::Id pooled = encoder_pooled_node(
            t, bundle.encoder, encoder_input_ids(bundle, tuple.sys_utterance), kNumHeads);
        nn::Tape::Id logp = t.log_softmax_rows(
            t.add_rowvec(t.matmul(pooled, t.param(bag_w)), t.param(bag_b)));
        terms.push_back(t.scale(t.sum_all(t.hadamard(t.constant(bag), logp)), -1.0));
      }
      if (terms.empty()) continue;
      nn::Tape::Id loss = t.mean_all(t.concat_cols(terms));
      const double value = t.val(loss)(0, 0);
      if (!std::isfinite(value))
        throw RuntimeFailure("encoder pretraining produced a non-finite loss");
      t.backward(loss);
      t.flush_param_grads();
      adam.step(params, nn::linear_lr(cfg.learning_rate, step, total_steps));
      ++step;
      writer.write(make_report(1, epoch, step, {{"l_bag", value}}));
    }
  }
}

// The generator pretrains on the same shape it serves downstream: prefix rows,
// then serialized history, then the response under next-token NLL. The prefix
// carries the mean embedding of the response's own tokens; without an
// informative prefix in place here, the attention heads never learn to look at
// prefix positions and latent conditioning can't influence decoding later.
void pretrain_generator(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                        const TrainOptions& options) {
  const TrainConfig& cfg = bundle.config;
  set_trainable(bundle.generator, true);
  std::vector<nn::Parameter*> params;
  collect_params(bundle.generator, params);
  nn::Adam adam;
  LossWriter writer(options.log_dir, "pretrain", {"l_lm"});

  const long total_steps = cfg.gen_pretrain_epochs * steps_per_epoch(tuples.size(), cfg.batch_size);
  long step = 0;
  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.gen_pretrain_epochs && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(tuples.size(), cfg.seed, 0, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stopped = true;
        break;
      }
      nn::Tape t;
      std::vector<nn::Tape::Id> terms;
      const size_t end = std::min(at + static_cast<size_t>(cfg.batch_size), order.size());
      for (size_t i = at; i < end; ++i) {
        const TrainingTuple& tuple = tuples[order[i]];
        std::vector<int> words = bundle.tokenizer.encode_text(tuple.sys_utterance.text);
        const GeneratorContext ctx = generator_context(bundle, tuple.history);
        const long room = cfg.max_seq_len - static_cast<long>(ctx.ids.size());
        if (static_cast<long>(words.size()) > room) {
          spdlog::warn("response in tuple {} truncated to fit max_seq_len={}",
                       tuple.tuple_id(), cfg.max_seq_len);
          words.resize(static_cast<size_t>(std::max(room, 0L)));
        }
        Eigen::RowVectorXd bag = Eigen::RowVectorXd::Zero(cfg.d_model);
        for (int id : words) bag += bundle.generator.tok_embed.value.row(id);
        if (!words.empty()) bag /= static_cast<double>(words.size());
        nn::Matrix prefix(cfg.T, cfg.d_model);
        for (int r = 0; r < cfg.T; ++r) prefix.row(r) = bag;
        std::vector<int> text = ctx.ids;
        text.insert(text.end(), words.begin(), words.end());
        std::vector<int> targets = words;
        targets.push_back(Tokenizer::kEos);
        terms.push_back(generator_nll_nodes(t, bundle.generator, t.constant(prefix),
                                            text, ctx.response_row, targets, kNumHeads)
                            .mean_nll);
      }
      nn::Tape::Id loss = t.mean_all(t.concat_cols(terms));
      const double value = t.val(loss)(0, 0);
      if (!std::isfinite(value))
        throw RuntimeFailure("generator pretraining produced a non-finite loss");
      t.backward(loss);
      t.flush_param_grads();
      adam.step(params, nn::linear_lr(cfg.learning_rate, step, total_steps));
      ++step;
      writer.write(make_report(1, epoch, step, {{"l_lm", value}}));
    }
  }
  set_trainable(bundle.generator, false);
  bundle.generator_frozen = true;
}

}  // namespace

std::vector<TrainingTuple> pseudo_label(ModelBundle& bundle,
                                        std::vector<TrainingTuple> tuples) {
  if (bundle.stage < 1)
    throw ValidationError("pseudo-labeling requires a stage-1 checkpoint (bundle is at stage " +
                          std::to_string(bundle.stage) + ")");
  for (TrainingTuple& t : tuples)
    t.pseudo_label = encode_utterance(bundle, t.sys_utterance);
  return tuples;
}

void train_stage1(ModelBundle& bundle, const std::vector<DialogueRecord>& records,
                  const std::vector<TrainingTuple>& tuples, const TrainOptions& options,
                  const ReportSink& sink) {
  if (bundle.stage != 0)
    throw ValidationError("stage 1 must start from a freshly initialized bundle, not a stage-" +
                          std::to_string(bundle.stage) + " checkpoint");
  if (records.empty() || tuples.empty())
    throw ValidationError("stage 1 needs a non-empty corpus");
  const TrainConfig& cfg = bundle.config;

  pretrain_encoder(bundle, tuples, options);
  pretrain_generator(bundle, tuples, options);
  bundle.stage = 1;

  std::vector<nn::Parameter*> params = all_params(bundle);
  nn::Adam adam;
  LossWriter writer(options.log_dir, "stage1", {"l_con", "l_reg"});
  const long per_epoch = steps_per_epoch(tuples.size(), cfg.batch_size);
  const long total_steps = cfg.epochs_per_stage * per_epoch;
  long step = 0;
  int epochs_done = 0;
  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.epochs_per_stage && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(tuples.size(), cfg.seed, 1, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stopped = true;
        break;
      }
      const std::vector<TrainingTuple> batch =
          gather_batch(tuples, order, at, static_cast<size_t>(cfg.batch_size));
      const double frac =
          static_cast<double>(step + 1) / static_cast<double>(total_steps);
      const double balance_w =
          kStage1BalanceWeight *
          std::min(1.0, static_cast<double>(step + 1) /
                            static_cast<double>(per_epoch)) *
          std::min(1.0, std::max(0.0, (1.0 - frac) / (1.0 - kStage1BalanceHold)));
      const double commit_w = kStage1CommitWeight * frac;
      nn::Tape t;
      Stage1Nodes nodes = stage1_train_nodes(t, bundle, batch);
      nn::Tape::Id ulogu =
          t.hadamard(nodes.usage, t.log(t.add_scalar(nodes.usage, 1e-12)));
      nn::Tape::Id balance =
          t.add_scalar(t.sum_all(ulogu), std::log(static_cast<double>(cfg.K)));
      nn::Tape::Id reg = t.add(t.scale(nodes.l_commit, commit_w),
                               t.scale(balance, balance_w));
      nn::Tape::Id loss = t.add(nodes.l_con, reg);
      const double con = t.val(nodes.l_con)(0, 0);
      const double reg_v = t.val(reg)(0, 0);
      t.backward(loss);
      t.flush_param_grads();
      adam.step(params, nn::linear_lr(cfg.learning_rate, step, total_steps));
      ++step;
      const LossReport report =
          make_report(1, epoch, step, {{"l_con", con}, {"l_reg", reg_v}});
      writer.write(report);
      if (sink) sink(report);
    }
    if (!stopped) {
      epochs_done = epoch;
      maybe_save(bundle, options, "stage1_epoch" + std::to_string(epoch), epoch);
    }
  }
  maybe_save(bundle, options, "stage1_final", epochs_done);
}

void train_stage2(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                  const TrainOptions& options, const ReportSink& sink) {
  if (bundle.stage != 1)
    throw ValidationError("stage 2 requires a stage-1 checkpoint, got stage " +
                          std::to_string(bundle.stage));
  if (tuples.empty()) throw ValidationError("stage 2 needs a non-empty tuple set");
  const TrainConfig& cfg = bundle.config;
  require_labels_and_rewards(tuples, cfg.K);

  std::vector<nn::Parameter*> encoder_params;
  collect_params(bundle.encoder, encoder_params);
  set_component_trainable(encoder_params, false);
  bundle.codebook.vectors.trainable = !cfg.freeze_codebook_after_stage1;
  bundle.stage = 2;

  std::vector<nn::Parameter*> params = all_params(bundle);
  nn::Adam adam;
  LossWriter writer(options.log_dir, "stage2", {"l_kl", "l_q", "l_v"});
  const long total_steps = cfg.epochs_per_stage * steps_per_epoch(tuples.size(), cfg.batch_size);
  long step = 0;
  int epochs_done = 0;
  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.epochs_per_stage && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(tuples.size(), cfg.seed, 2, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stopped = true;
        break;
      }
      const std::vector<TrainingTuple> batch =
          gather_batch(tuples, order, at, static_cast<size_t>(cfg.batch_size));
      const QVBatchAux aux = compute_qv_aux(bundle, batch);
      nn::Tape t;
      const Stage2Nodes nodes = stage2_loss_nodes(t, bundle, batch, cfg.delta, aux);
      nn::Tape::Id total = t.add(t.add(nodes.l_kl, nodes.l_q), nodes.l_v);
      const LossReport report = make_report(2, epoch, step + 1,
                                            {{"l_kl", t.val(nodes.l_kl)(0, 0)},
                                             {"l_q", t.val(nodes.l_q)(0, 0)},
                                             {"l_v", t.val(nodes.l_v)(0, 0)}});
      t.backward(total);
      t.flush_param_grads();
      adam.step(params, nn::linear_lr(cfg.learning_rate, step, total_steps));
      ++step;
      writer.write(report);
      if (sink) sink(report);
    }
    if (!stopped) {
      epochs_done = epoch;
      maybe_save(bundle, options, "stage2_epoch" + std::to_string(epoch), epoch);
    }
  }
  maybe_save(bundle, options, "stage2_final", epochs_done);
}

void train_stage3(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                  const TrainOptions& options, const ReportSink& sink) {
  if (bundle.stage != 2 && !(options.allow_from_stage1 && bundle.stage == 1))
    throw ValidationError("stage 3 requires a stage-2 checkpoint (got stage " +
                          std::to_string(bundle.stage) +
                          "); pass --skip-stage2 to start from stage 1");
  if (tuples.empty()) throw ValidationError("stage 3 needs a non-empty tuple set");
  const TrainConfig& cfg = bundle.config;
  require_labels_and_rewards(tuples, cfg.K);

  std::vector<nn::Parameter*> encoder_params;
  collect_params(bundle.encoder, encoder_params);
  set_component_trainable(encoder_params, false);
  bundle.codebook.vectors.trainable = !cfg.freeze_codebook_after_stage1;
  bundle.stage = 3;

  std::vector<nn::Parameter*> params = all_params(bundle);
  nn::Adam adam;
  LossWriter writer(options.log_dir, "stage3", {"l_high", "l_low", "l_q", "l_v"});
  const long total_steps = cfg.epochs_per_stage * steps_per_epoch(tuples.size(), cfg.batch_size);
  long step = 0;
  int epochs_done = 0;
  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.epochs_per_stage && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(tuples.size(), cfg.seed, 3, epoch);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stopped = true;
        break;
      }
      const std::vector<TrainingTuple> batch =
          gather_batch(tuples, order, at, static_cast<size_t>(cfg.batch_size));
      const Stage3Aux aux = compute_stage3_aux(bundle, batch);
      nn::Tape t;
      const Stage3Nodes nodes = stage3_loss_nodes(t, bundle, batch, aux);
      nn::Tape::Id total =
          t.add(t.add(t.add(nodes.l_high, nodes.l_low), nodes.l_q), nodes.l_v);
      const LossReport report = make_report(3, epoch, step + 1,
                                            {{"l_high", t.val(nodes.l_high)(0, 0)},
                                             {"l_low", t.val(nodes.l_low)(0, 0)},
                                             {"l_q", t.val(nodes.l_q)(0, 0)},
                                             {"l_v", t.val(nodes.l_v)(0, 0)}});
      t.backward(total);
      t.flush_param_grads();
      adam.step(params, nn::linear_lr(cfg.learning_rate, step, total_steps));
      ++step;
      writer.write(report);
      if (sink) sink(report);
    }
    if (!stopped) {
      epochs_done = epoch;
      maybe_save(bundle, options, "stage3_epoch" + std::to_string(epoch), epoch);
    }
  }
  maybe_save(bundle, options, "stage3_final", epochs_done);
}

}  // namespace ldpp
