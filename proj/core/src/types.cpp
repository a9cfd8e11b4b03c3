#include "ldpp/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ldpp/error.hpp"

namespace ldpp {

std::string role_name(Role r) { return r == Role::system ? "system" : "user"; }

Role role_from_name(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  throw ValidationError("unknown role '" + s + "' (expected 'system' or 'user')");
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

bool is_simplex(const PolicyDistribution& d, double tol) {
  if (d.probs.size() == 0) return false;
  double sum = 0.0;
  for (int i = 0; i < d.probs.size(); ++i) {
    double p = d.probs[i];
    if (!std::isfinite(p) || p < 0.0) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

namespace {

bool all_whitespace(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

void validate_turn(const Turn& t, const std::string& where) {
  if (t.text.empty() || all_whitespace(t.text)) {
    throw ValidationError(where + ": turn text is empty after trimming");
  }
}

void validate_record(const DialogueRecord& r) {
  if (r.id.empty()) throw ValidationError("record with empty id");
  if (r.turns.empty()) throw ValidationError("record '" + r.id + "': no turns");
  for (size_t i = 0; i < r.turns.size(); ++i) {
    validate_turn(r.turns[i], "record '" + r.id + "' turn " + std::to_string(i));
    if (i > 0 && r.turns[i].role == r.turns[i - 1].role) {
      throw ValidationError("record '" + r.id + "': consecutive turns share role at turn " +
                            std::to_string(i));
    }
  }
  if (r.ground_truth_labels) {
    int sys = count_system_turns(r.turns);
    if (static_cast<int>(r.ground_truth_labels->size()) != sys) {
      throw ValidationError("record '" + r.id + "': ground_truth_labels length " +
                            std::to_string(r.ground_truth_labels->size()) +
                            " != system turn count " + std::to_string(sys));
    }
  }
}

void validate_tuple(const TrainingTuple& t) {
  const std::string where = "tuple " + t.tuple_id();
  if (t.sys_utterance.role != Role::system) {
    throw ValidationError(where + ": sys_utterance role is not system");
  }
  validate_turn(t.sys_utterance, where);
  if (!t.history.empty()) {
    for (size_t i = 1; i < t.history.size(); ++i) {
      if (t.history[i].role == t.history[i - 1].role) {
        throw ValidationError(where + ": history roles do not alternate");
      }
    }
    if (t.history.back().role != Role::user) {
      throw ValidationError(where + ": non-empty history must end with a user turn");
    }
  }
  if (t.usr_reply && t.usr_reply->role != Role::user) {
    throw ValidationError(where + ": usr_reply role is not user");
  }
  if (!t.usr_reply && !t.is_terminal) {
    throw ValidationError(where + ": missing usr_reply on a non-terminal tuple");
  }
  std::vector<Turn> expect = t.history;
  expect.push_back(t.sys_utterance);
  if (t.usr_reply) expect.push_back(*t.usr_reply);
  if (expect.size() != t.next_history.size()) {
    throw ValidationError(where + ": next_history is not history + sys + usr");
  }
  for (size_t i = 0; i < expect.size(); ++i) {
    if (expect[i].role != t.next_history[i].role || expect[i].text != t.next_history[i].text) {
      throw ValidationError(where + ": next_history mismatch at turn " + std::to_string(i));
    }
  }
  if (t.reward && (!std::isfinite(*t.reward) || *t.reward < -1.0 || *t.reward > 1.0)) {
    throw ValidationError(where + ": reward outside [-1, 1]");
  }
  if (t.pseudo_label && !is_simplex(*t.pseudo_label)) {
    throw ValidationError(where + ": pseudo_label is not a simplex");
  }
}

int count_system_turns(const std::vector<Turn>& turns) {
  int n = 0;
  for (const auto& t : turns) {
    if (t.role == Role::system) ++n;
  }
  return n;
}

}  // namespace ldpp
