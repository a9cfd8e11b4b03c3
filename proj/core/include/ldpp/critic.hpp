#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ldpp/synthetic.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

// Ordered four-point scale shared by both task domains.
enum class CriticLabel { worse = 0, same = 1, better = 2, solved = 3 };

enum class CriticDomain { support, persuasion };

double critic_label_value(CriticLabel l);  // {-1, -0.5, 0.1, 1.0}
std::string critic_label_name(CriticLabel l, CriticDomain domain = CriticDomain::support);
CriticLabel critic_label_from_name(const std::string& name);

struct CriticVerdict {
  CriticLabel label = CriticLabel::same;
  double value = -0.5;
};

CriticVerdict make_verdict(CriticLabel l);

// Labels a state transition exactly, then flips to an adjacent label with
// probability `noise` so vote averaging is exercised.
class ScriptedStateCritic {
 public:
  explicit ScriptedStateCritic(double noise = 0.1);
  CriticVerdict vote(int prev_state, int new_state, std::mt19937_64& rng) const;

 private:
  double noise_;
};

// Corpus-side critic: one classification per call for a tuple's completed
// exchange (history + system turn + user reply).
class TurnCritic {
 public:
  virtual ~TurnCritic() = default;
  virtual CriticVerdict vote(const TrainingTuple& tuple, std::mt19937_64& rng) = 0;
};

// Reads the hidden state trace recorded in synthetic metadata.
class ScriptedCorpusCritic : public TurnCritic {
 public:
  ScriptedCorpusCritic(const std::vector<DialogueRecord>& records, double noise = 0.1);
  CriticVerdict vote(const TrainingTuple& tuple, std::mt19937_64& rng) override;

 private:
  ScriptedStateCritic critic_;
  std::map<std::string, SyntheticStateInfo> states_;
};

// Mean of `votes` critic values per tuple; deterministic given seed.
// Returns a new vector; input order preserved.
std::vector<TrainingTuple> annotate_rewards(const std::vector<TrainingTuple>& tuples,
                                            TurnCritic& critic, int votes, long long seed);

}  // namespace ldpp
