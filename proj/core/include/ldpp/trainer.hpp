#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ldpp/losses.hpp"
#include "ldpp/model.hpp"

namespace ldpp {

struct LossReport {
  int stage = 0;
  int epoch = 0;  // 1-based
  long step = 0;  // 1-based within the stage
  std::vector<std::pair<std::string, double>> parts;
  double total = 0.0;  // always the sum of parts

  nlohmann::json to_json() const;
};

using ReportSink = std::function<void(const LossReport&)>;

struct TrainOptions {
  long max_steps = 0;                   // 0 = no cap; used by determinism checks
  std::filesystem::path checkpoint_dir; // per-epoch + final checkpoints; "" = none
  std::filesystem::path log_dir;        // JSONL + CSV loss streams; "" = none
  bool allow_from_stage1 = false;       // stage 3 only: skip the stage-2 gate
};

// Pseudo-labels are the encoder's eval-mode distribution over the codebook
// for each recorded system utterance.
std::vector<TrainingTuple> pseudo_label(ModelBundle& bundle,
                                        std::vector<TrainingTuple> tuples);

// Stage 1: next-token pretraining of the generator on history-conditioned
// responses with a summary prefix in place (then frozen), followed by
// reconstruction training of encoder, codebook and the policy adapter.
// Requires a freshly initialized bundle.
void train_stage1(ModelBundle& bundle, const std::vector<DialogueRecord>& records,
                  const std::vector<TrainingTuple>& tuples, const TrainOptions& options,
                  const ReportSink& sink = {});

// Stage 2: planner distillation plus value-head regression. Requires a
// stage-1 bundle and tuples carrying both rewards and pseudo-labels.
void train_stage2(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                  const TrainOptions& options, const ReportSink& sink = {});

// Stage 3: advantage-weighted planner and adapter training with live value
// heads. Requires a stage-2 bundle unless options.allow_from_stage1.
void train_stage3(ModelBundle& bundle, const std::vector<TrainingTuple>& tuples,
                  const TrainOptions& options, const ReportSink& sink = {});

}  // namespace ldpp
