#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ldpp/critic.hpp"
#include "ldpp/model.hpp"
#include "ldpp/synthetic.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

// Conversation partner for self-play. `state` is the hidden user state on
// entry; implementations return the reply and the state after it.
class UserSimulator {
 public:
  virtual ~UserSimulator() = default;
  virtual std::pair<Turn, int> simulate_user(int state, const std::vector<Turn>& history,
                                             const std::string& topic,
                                             const std::string& feeling,
                                             std::mt19937_64& rng) const = 0;
};

// Scripted partner. Classifies the system's latest utterance against the
// strategy templates, advances the hidden state, and replies with a template
// drawn for the new state. An unclassifiable utterance counts as
// off-strategy, so the state may drop. State 4 is absorbing.
class ScriptedUserSimulator : public UserSimulator {
 public:
  explicit ScriptedUserSimulator(SyntheticSpec spec);

  std::pair<Turn, int> simulate_user(int state, const std::vector<Turn>& history,
                                     const std::string& topic, const std::string& feeling,
                                     std::mt19937_64& rng) const override;

  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
  StrategyClassifier classifier_;
};

// Turn-level judge for self-play. The scripted implementation reads the
// simulator's hidden states; external adapters read the conversation text.
class EpisodeCritic {
 public:
  virtual ~EpisodeCritic() = default;
  virtual CriticVerdict vote(const std::vector<Turn>& history, int prev_state, int new_state,
                             std::mt19937_64& rng) = 0;
};

class ScriptedEpisodeCritic : public EpisodeCritic {
 public:
  explicit ScriptedEpisodeCritic(double noise = 0.1) : critic_(noise) {}
  CriticVerdict vote(const std::vector<Turn>& history, int prev_state, int new_state,
                     std::mt19937_64& rng) override;

 private:
  ScriptedStateCritic critic_;
};

// Mean of `votes` verdict values for the exchange that just completed.
// votes < 1 is a validation error.
double critic_reward(EpisodeCritic& critic, const std::vector<Turn>& history, int prev_state,
                     int new_state, int votes, std::mt19937_64& rng);

enum class PlannerMode {
  mixture,  // full weighted mixture of codebook rows under the planner
  argmax,   // one-hot at the planner's argmax (ablation)
  random,   // uniformly drawn one-hot code each turn (baseline)
};

std::string planner_mode_name(PlannerMode m);
PlannerMode planner_mode_from_name(const std::string& s);

enum class EpisodeStatus { ok, generation_failure, critic_error };

std::string episode_status_name(EpisodeStatus s);
EpisodeStatus episode_status_from_name(const std::string& s);

struct EpisodeParams {
  int max_turns = 10;
  double eta = 0.6;  // stop when a turn reward strictly exceeds this
  int votes = 10;
  DecodeParams decode;
  PlannerMode planner = PlannerMode::mixture;
  long long seed = 7;
  int history_seed_turns = 1;  // opening turns copied from the case record
};

struct EpisodeLog {
  std::string case_id;
  std::vector<Turn> turns;           // seeded opening plus everything produced
  std::vector<double> turn_rewards;  // one per scored system turn
  bool success = false;
  int num_turns = 0;
  double final_reward = 0.0;
  long long seed = 0;
  std::vector<PolicyDistribution> policy_trace;
  EpisodeStatus status = EpisodeStatus::ok;

  nlohmann::json to_json() const;
  static EpisodeLog from_json(const nlohmann::json& j);
};

// One full evaluation dialogue. The history is seeded with the case's opening
// turns, then the loop runs plan -> mix -> policy tokens -> generate ->
// simulated user reply -> critic vote until the reward clears eta or the
// budget runs out. Success requires final_reward > eta (strict).
//
// An aborted episode (generation failure or critic error) is recorded with
// its status, num_turns forced to max_turns and final_reward -1, so it counts
// as a failure unless callers exclude non-ok logs explicitly. Only these
// aborted logs may have fewer rewards than num_turns.
EpisodeLog run_episode(ModelBundle& bundle, const UserSimulator& sim, EpisodeCritic& critic,
                       const DialogueRecord& episode_case, const EpisodeParams& params);

// Episodes over the first n_cases records (all when n_cases <= 0). Each
// episode derives its RNG stream from (params.seed, case_id), so ordering or
// parallel scheduling cannot change results.
std::vector<EpisodeLog> run_cases(ModelBundle& bundle, const UserSimulator& sim,
                                  EpisodeCritic& critic,
                                  const std::vector<DialogueRecord>& cases,
                                  const EpisodeParams& params, int n_cases = 0);

struct Metrics {
  double ssr = 0.0;   // mean final reward
  double sr = 0.0;    // fraction of successes at eta
  double avg_t = 0.0; // mean system-turn count
  int n_cases = 0;

  nlohmann::json to_json() const;
  static Metrics from_json(const nlohmann::json& j);
  std::string csv_header() const;
  std::string csv_row() const;
};

// Empty input (after optional filtering) is a validation error.
Metrics compute_metrics(const std::vector<EpisodeLog>& logs, double eta,
                        bool exclude_aborted = false);

void write_episode_logs(const std::filesystem::path& path, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> read_episode_logs(const std::filesystem::path& path);

void write_metrics(const std::filesystem::path& json_path, const Metrics& metrics);
void write_metrics_csv(const std::filesystem::path& csv_path, const Metrics& metrics);

}  // namespace ldpp
