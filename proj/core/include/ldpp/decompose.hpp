#pragma once

#include <vector>

#include "ldpp/types.hpp"

namespace ldpp {

// One tuple per system turn, anchored there: history is everything before it,
// usr_reply the immediately following user turn when present. Tuple order
// follows (dialogue order, turn order); the dialogue's final system turn is
// marked terminal.
std::vector<TrainingTuple> decompose(const std::vector<DialogueRecord>& records);

}  // namespace ldpp
