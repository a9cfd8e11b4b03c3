#include "ldpp/critic.hpp"

#include "ldpp/error.hpp"

namespace ldpp {

double critic_label_value(CriticLabel l) {
  switch (l) {
    case CriticLabel::worse: return -1.0;
    case CriticLabel::same: return -0.5;
    case CriticLabel::better: return 0.1;
    case CriticLabel::solved: return 1.0;
  }
  throw ValidationError("invalid critic label");
}

std::string critic_label_name(CriticLabel l, CriticDomain domain) {
  static const char* support[] = {"worse", "same", "better", "solved"};
  static const char* persuasion[] = {"reject", "neutral", "positive", "donate"};
  const char** names = domain == CriticDomain::support ? support : persuasion;
  return names[static_cast<int>(l)];
}

CriticLabel critic_label_from_name(const std::string& name) {
  static const std::map<std::string, CriticLabel> table = {
      {"worse", CriticLabel::worse},   {"reject", CriticLabel::worse},
      {"same", CriticLabel::same},     {"neutral", CriticLabel::same},
      {"better", CriticLabel::better}, {"positive", CriticLabel::better},
      {"solved", CriticLabel::solved}, {"donate", CriticLabel::solved}};
  auto it = table.find(name);
  if (it == table.end()) throw ValidationError("unknown critic label '" + name + "'");
  return it->second;
}

CriticVerdict make_verdict(CriticLabel l) { return CriticVerdict{l, critic_label_value(l)}; }

ScriptedStateCritic::ScriptedStateCritic(double noise) : noise_(noise) {
  if (noise < 0.0 || noise >= 1.0) throw ValidationError("critic noise outside [0, 1)");
}

CriticVerdict ScriptedStateCritic::vote(int prev_state, int new_state,
                                        std::mt19937_64& rng) const {
  if (prev_state < 0 || new_state < 0) {
    throw ValidationError("scripted critic needs hidden states (synthetic records only)");
  }
  CriticLabel label;
  if (new_state == SyntheticSpec::kMaxState) {
    label = CriticLabel::solved;
  } else if (new_state > prev_state) {
    label = CriticLabel::better;
  } else if (new_state < prev_state) {
    label = CriticLabel::worse;
  } else {
    label = CriticLabel::same;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < noise_) {
    int idx = static_cast<int>(label);
    int neighbor;
    if (idx == 0) {
      neighbor = 1;
    } else if (idx == 3) {
      neighbor = 2;
    } else {
      neighbor = unit(rng) < 0.5 ? idx - 1 : idx + 1;
    }
    label = static_cast<CriticLabel>(neighbor);
  }
  return make_verdict(label);
}

ScriptedCorpusCritic::ScriptedCorpusCritic(const std::vector<DialogueRecord>& records,
                                           double noise)
    : critic_(noise) {
  for (const auto& r : records) states_[r.id] = parse_state_meta(r);
}

CriticVerdict ScriptedCorpusCritic::vote(const TrainingTuple& tuple, std::mt19937_64& rng) {
  auto it = states_.find(tuple.dialogue_id);
  if (it == states_.end()) {
    throw ValidationError("scripted critic has no state trace for dialogue '" +
                          tuple.dialogue_id + "'");
  }
  const SyntheticStateInfo& info = it->second;
  int idx = tuple.turn_index;
  if (idx < 0 || idx >= static_cast<int>(info.trace.size())) {
    throw ValidationError("tuple " + tuple.tuple_id() + " outside recorded state trace");
  }
  int prev = idx == 0 ? info.start_state : info.trace[idx - 1];
  return critic_.vote(prev, info.trace[idx], rng);
}

std::vector<TrainingTuple> annotate_rewards(const std::vector<TrainingTuple>& tuples,
                                            TurnCritic& critic, int votes, long long seed) {
  if (votes < 1) throw ValidationError("annotate_rewards: votes must be >= 1");
  std::vector<TrainingTuple> out = tuples;
  for (size_t i = 0; i < out.size(); ++i) {
    std::seed_seq seq{static_cast<unsigned long long>(seed), static_cast<unsigned long long>(i)};
    std::mt19937_64 rng(seq);
    double sum = 0.0;
    for (int v = 0; v < votes; ++v) sum += critic.vote(out[i], rng).value;
    out[i].reward = sum / votes;
  }
  return out;
}

}  // namespace ldpp
