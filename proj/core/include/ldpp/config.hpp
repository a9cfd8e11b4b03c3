#pragma once

#include <nlohmann/json.hpp>
#include <filesystem>
#include <string>

namespace ldpp {

enum class Scheduler { linear };
enum class QInputMode { expected, argmax };

std::string scheduler_name(Scheduler s);
Scheduler scheduler_from_name(const std::string& s);
std::string q_input_mode_name(QInputMode m);
QInputMode q_input_mode_from_name(const std::string& s);

// One flat config for all stages. Defaults follow the headline setting
// (T, L, K) = (8, 6, 24); width/rates are desk-scale so the full pipeline
// trains in minutes on one CPU core.
struct TrainConfig {
  int K = 24;             // codebook entries
  int T = 8;              // policy prefix tokens
  int L = 6;              // policy-adapter transformer layers
  int d = 32;             // policy vector dimension
  int d_model = 64;       // trunk width (encoder/planner/generator/adapter)
  double tau_expectile = 0.7;
  double tau_awr = 1.0;
  double gamma = 0.999;   // policy-level discount, must stay < 1
  double delta = 0.1;     // distillation reward filter
  double eta = 0.6;       // self-play success threshold
  int batch_size = 8;
  int epochs_per_stage = 5;
  int max_seq_len = 512;
  double learning_rate = 1e-3;
  Scheduler scheduler = Scheduler::linear;
  long long seed = 7;
  QInputMode q_input_mode = QInputMode::expected;
  bool freeze_codebook_after_stage1 = true;

  double exp_clip = 20.0;      // cap on advantage weights exp(tau*A)
  int votes = 10;              // critic classifications averaged per reward
  int max_turns = 10;          // self-play turn budget
  int max_new_tokens = 16;     // generation budget per turn
  int max_history_tokens = 64; // serialized-history cap (<= max_seq_len)
  int gen_pretrain_epochs = 3; // plain LM epochs before the generator freezes

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // rejects unknown keys
  std::string hash() const;
};

// Missing file is an error; an empty JSON object yields the defaults.
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace ldpp
