#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ldpp {

enum class Role { system, user };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

struct Turn {
  Role role = Role::system;
  std::string text;
};

// One policy simplex over the K codebook entries.
struct PolicyDistribution {
  Eigen::VectorXd probs;

  int size() const { return static_cast<int>(probs.size()); }
};

// Lowest index wins on ties; used everywhere an argmax is taken.
int argmax_lowest(const Eigen::VectorXd& v);

bool is_simplex(const PolicyDistribution& d, double tol = 1e-6);

struct DialogueRecord {
  std::string id;
  std::map<std::string, std::string> meta;
  std::vector<Turn> turns;
  std::optional<std::vector<int>> ground_truth_labels;
};

struct TrainingTuple {
  std::string dialogue_id;
  int turn_index = 0;
  std::vector<Turn> history;
  Turn sys_utterance;
  std::optional<Turn> usr_reply;
  std::vector<Turn> next_history;
  std::optional<double> reward;
  std::optional<PolicyDistribution> pseudo_label;
  bool is_terminal = false;

  std::string tuple_id() const { return dialogue_id + ":" + std::to_string(turn_index); }
};

// Throw ValidationError when an invariant fails; `where` names the record in messages.
void validate_turn(const Turn& t, const std::string& where);
void validate_record(const DialogueRecord& r);
void validate_tuple(const TrainingTuple& t);

int count_system_turns(const std::vector<Turn>& turns);

}  // namespace ldpp
