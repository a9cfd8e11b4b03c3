#pragma once

#include <nlohmann/json.hpp>
#include <map>
#include <string>
#include <vector>

#include "ldpp/types.hpp"

namespace ldpp {

// Whitespace word-level vocabulary. Fixed special ids, then corpus words
// ordered by (frequency desc, word asc) so construction is deterministic.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kCls = 3;
  static constexpr int kSys = 4;
  static constexpr int kUsr = 5;
  static constexpr int kNumSpecial = 6;

  static Tokenizer build(const std::vector<DialogueRecord>& records);
  static Tokenizer build_from_tuples(const std::vector<TrainingTuple>& tuples);

  int vocab_size() const { return kNumSpecial + static_cast<int>(words_.size()); }
  int word_id(const std::string& w) const;  // kUnk when absent
  const std::string& id_word(int id) const;

  std::vector<int> encode_text(const std::string& text) const;
  // marker, words..., eos for each turn
  std::vector<int> encode_turn(const Turn& t) const;
  // concatenated encoded turns, left-truncated to the last max_tokens
  std::vector<int> serialize_history(const std::vector<Turn>& turns, int max_tokens) const;
  std::string decode_words(const std::vector<int>& ids) const;  // drops special ids

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
  void rebuild_index();
};

}  // namespace ldpp
