#include "ldpp/augment.hpp"

#include <spdlog/spdlog.h>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

int draw_index(std::mt19937_64& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

}  // namespace

ScriptedTemplateCompleter::ScriptedTemplateCompleter(SyntheticSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

CompletionResult ScriptedTemplateCompleter::complete(const DialogueRecord& source,
                                                     const std::vector<Turn>& prefix,
                                                     int target_turns, std::mt19937_64& rng) {
  SyntheticStateInfo info;
  try {
    info = parse_state_meta(source);
  } catch (const ValidationError& e) {
    throw RuntimeFailure(std::string("scripted completer: ") + e.what());
  }
  const std::string topic =
      source.meta.count("scene") ? source.meta.at("scene") : spec_.topics.front();
  const std::string feeling = spec_.feelings[draw_index(rng, static_cast<int>(spec_.feelings.size()))];

  int sys_in_prefix = count_system_turns(prefix);
  int state = sys_in_prefix == 0 ? info.start_state : info.trace[sys_in_prefix - 1];

  CompletionResult res;
  res.new_labels = std::vector<int>{};
  res.new_trace = std::vector<int>{};
  auto total = [&]() { return static_cast<int>(prefix.size() + res.turns.size()); };
  Role last_role = prefix.back().role;

  auto user_turn = [&](int st) {
    const auto& pool = spec_.user_templates[st];
    return Turn{Role::user,
                render_template(pool[draw_index(rng, static_cast<int>(pool.size()))], topic, feeling)};
  };

  // A prefix cut after a system turn still owes that turn its user reply; the
  // hidden state for it is already recorded in the source trace.
  if (last_role == Role::system && total() < target_turns) {
    res.turns.push_back(user_turn(state));
    last_role = Role::user;
  }
  while (total() < target_turns) {
    bool closing_exchange = (state == SyntheticSpec::kMaxState);
    int strat = behavior_pick_strategy(spec_, state, rng);
    const auto& pool = spec_.strategies[strat].templates;
    res.turns.push_back(Turn{
        Role::system, render_template(pool[draw_index(rng, static_cast<int>(pool.size()))], topic,
                                      feeling)});
    res.new_labels->push_back(strat);
    state = transition_state(spec_, state, strat == spec_.correct_strategy[state], rng);
    res.new_trace->push_back(state);
    if (total() < target_turns) res.turns.push_back(user_turn(state));
    if (closing_exchange) break;
  }
  return res;
}

std::vector<DialogueRecord> augment_context_completion(
    const std::vector<DialogueRecord>& records, DialogueCompleter& completer,
    PrefixRange prefixes, int per_dialogue, long long seed) {
  if (prefixes.lo < 1 || prefixes.hi < prefixes.lo) {
    throw ValidationError("augment: invalid prefix range");
  }
  int distinct = prefixes.hi - prefixes.lo + 1;
  if (per_dialogue < 0 || per_dialogue > distinct) {
    throw ValidationError("augment: per_dialogue must lie in [0, number of distinct prefix lengths]");
  }
  std::vector<DialogueRecord> out;
  for (size_t r = 0; r < records.size(); ++r) {
    const DialogueRecord& source = records[r];
    if (static_cast<int>(source.turns.size()) < prefixes.hi) {
      spdlog::info("augment: skipping '{}' (fewer than {} turns)", source.id, prefixes.hi);
      continue;
    }
    for (int k = 0; k < per_dialogue; ++k) {
      int plen = prefixes.lo + k;
      std::seed_seq seq{static_cast<unsigned long long>(seed), static_cast<unsigned long long>(r),
                        static_cast<unsigned long long>(plen)};
      std::mt19937_64 rng(seq);
      std::vector<Turn> prefix(source.turns.begin(), source.turns.begin() + plen);
      CompletionResult res;
      try {
        res = completer.complete(source, prefix, static_cast<int>(source.turns.size()), rng);
      } catch (const RuntimeFailure& e) {
        spdlog::warn("augment: completion failed for '{}' prefix {}: {}", source.id, plen,
                     e.what());
        continue;
      }
      DialogueRecord rec;
      rec.id = source.id + "#aug" + std::to_string(plen);
      rec.meta = source.meta;
      rec.meta["aug_prefix"] = std::to_string(plen);
      rec.turns = prefix;
      rec.turns.insert(rec.turns.end(), res.turns.begin(), res.turns.end());
      int sys_in_prefix = count_system_turns(prefix);
      if (source.ground_truth_labels && res.new_labels) {
        std::vector<int> labels(source.ground_truth_labels->begin(),
                                source.ground_truth_labels->begin() + sys_in_prefix);
        labels.insert(labels.end(), res.new_labels->begin(), res.new_labels->end());
        rec.ground_truth_labels = std::move(labels);
      }
      if (source.meta.count("state_trace") && res.new_trace) {
        SyntheticStateInfo info = parse_state_meta(source);
        std::vector<int> trace(info.trace.begin(), info.trace.begin() + sys_in_prefix);
        trace.insert(trace.end(), res.new_trace->begin(), res.new_trace->end());
        std::string csv;
        for (size_t t = 0; t < trace.size(); ++t) {
          if (t) csv += ",";
          csv += std::to_string(trace[t]);
        }
        rec.meta["state_trace"] = csv;
      }
      validate_record(rec);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace ldpp
