#pragma once

#include <optional>
#include <random>
#include <vector>

#include "ldpp/synthetic.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

struct CompletionResult {
  std::vector<Turn> turns;                     // continuation after the prefix
  std::optional<std::vector<int>> new_labels;  // for the new system turns
  std::optional<std::vector<int>> new_trace;   // hidden states for the new turns
};

class DialogueCompleter {
 public:
  virtual ~DialogueCompleter() = default;
  // Extend `prefix` (a leading slice of `source`) with `target_turns - prefix`
  // further turns, preserving role alternation. Throws RuntimeFailure on
  // completion failure; the caller skips and logs that augmentation.
  virtual CompletionResult complete(const DialogueRecord& source,
                                    const std::vector<Turn>& prefix, int target_turns,
                                    std::mt19937_64& rng) = 0;
};

// Resumes the hidden-state chain of a synthetic record from the prefix
// boundary and replays the scripted behavior policy.
class ScriptedTemplateCompleter : public DialogueCompleter {
 public:
  explicit ScriptedTemplateCompleter(SyntheticSpec spec);
  CompletionResult complete(const DialogueRecord& source, const std::vector<Turn>& prefix,
                            int target_turns, std::mt19937_64& rng) override;

 private:
  SyntheticSpec spec_;
};

struct PrefixRange {
  int lo = 2;
  int hi = 8;
};

// For each source with at least `prefixes.hi` turns, emits `per_dialogue` new
// records, one per distinct prefix length starting at `prefixes.lo`, each
// completed back up to the source's own turn count. Sources never change;
// new ids encode (source id, prefix length). Failed completions are skipped
// and logged, never silently truncated.
std::vector<DialogueRecord> augment_context_completion(
    const std::vector<DialogueRecord>& records, DialogueCompleter& completer,
    PrefixRange prefixes, int per_dialogue, long long seed);

}  // namespace ldpp
