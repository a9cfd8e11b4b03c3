#include "ldpp/decompose.hpp"

namespace ldpp {

std::vector<TrainingTuple> decompose(const std::vector<DialogueRecord>& records) {
  std::vector<TrainingTuple> out;
  for (const auto& rec : records) {
    validate_record(rec);
    int last_sys = -1;
    for (int i = 0; i < static_cast<int>(rec.turns.size()); ++i) {
      if (rec.turns[i].role == Role::system) last_sys = i;
    }
    int tuple_index = 0;
    for (int i = 0; i < static_cast<int>(rec.turns.size()); ++i) {
      if (rec.turns[i].role != Role::system) continue;
      TrainingTuple t;
      t.dialogue_id = rec.id;
      t.turn_index = tuple_index++;
      t.history.assign(rec.turns.begin(), rec.turns.begin() + i);
      t.sys_utterance = rec.turns[i];
      if (i + 1 < static_cast<int>(rec.turns.size())) {
        t.usr_reply = rec.turns[i + 1];
      }
      t.is_terminal = (i == last_sys) || !t.usr_reply;
      t.next_history = t.history;
      t.next_history.push_back(t.sys_utterance);
      if (t.usr_reply) t.next_history.push_back(*t.usr_reply);
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace ldpp
