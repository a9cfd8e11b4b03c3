#pragma once

#include <nlohmann/json.hpp>
#include <array>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ldpp/types.hpp"

namespace ldpp {

// Ground-truth world for verification: a hidden user state in {0..4} climbs
// when the system plays the state's correct strategy (+1 w.p. p_up) and can
// drop otherwise (-1 w.p. p_down, floor 0). State 4 means solved.
struct StrategyTemplates {
  std::string name;
  std::vector<std::string> templates;  // "{topic}" / "{feeling}" slots allowed
};

struct SyntheticSpec {
  static constexpr int kMaxState = 4;

  std::vector<StrategyTemplates> strategies;
  std::array<std::vector<std::string>, kMaxState + 1> user_templates;  // keyed by state
  std::vector<std::string> topics;
  std::vector<std::string> feelings;
  std::array<int, kMaxState + 1> correct_strategy{};  // state -> strategy index
  double p_up = 0.8;
  double p_down = 0.5;
  double p_correct = 0.8;  // behavior policy plays the correct strategy this often
  std::vector<double> start_state_weights = {0.4, 0.3, 0.2, 0.1};  // states 0..3
  int max_sys_turns = 10;

  int num_strategies() const { return static_cast<int>(strategies.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  static SyntheticSpec default_spec();
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

std::string render_template(const std::string& tpl, const std::string& topic,
                            const std::string& feeling);

// Uniform-over-others error model around the correct strategy.
int behavior_pick_strategy(const SyntheticSpec& spec, int state, std::mt19937_64& rng);
int transition_state(const SyntheticSpec& spec, int state, bool played_correct,
                     std::mt19937_64& rng);

// Nearest-template classifier over strategy keyword bags. Words shared by
// three or more strategies are dropped as stop words; a zero score for every
// strategy classifies as off-strategy (nullopt).
class StrategyClassifier {
 public:
  explicit StrategyClassifier(const SyntheticSpec& spec);
  std::optional<int> classify(const std::string& text) const;

 private:
  std::vector<std::vector<std::string>> bags_;
};

// Pure function of (spec, n, seed). meta records scene, description, feeling,
// start_state and the per-system-turn state_trace consumed by the scripted
// critic and by evaluation case seeding.
std::vector<DialogueRecord> generate_synthetic(const SyntheticSpec& spec, int n, long long seed);

struct SyntheticStateInfo {
  int start_state = 0;
  std::vector<int> trace;  // state after each system turn's user reply
};

SyntheticStateInfo parse_state_meta(const DialogueRecord& record);

std::vector<std::string> split_words(const std::string& text);

}  // namespace ldpp
