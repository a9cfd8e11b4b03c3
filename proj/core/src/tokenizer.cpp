#include "ldpp/tokenizer.hpp"

#include <algorithm>

#include "ldpp/error.hpp"
#include "ldpp/synthetic.hpp"

namespace ldpp {

namespace {

Tokenizer build_from_counts(const std::map<std::string, long long>& counts) {
  std::vector<std::pair<long long, std::string>> order;
  order.reserve(counts.size());
  for (const auto& [w, c] : counts) order.emplace_back(-c, w);
  std::sort(order.begin(), order.end());
  std::vector<std::string> words;
  words.reserve(order.size());
  for (const auto& [negc, w] : order) words.push_back(w);
  nlohmann::json j{{"words", words}};
  return Tokenizer::from_json(j);
}

}  // namespace

Tokenizer Tokenizer::build(const std::vector<DialogueRecord>& records) {
  std::map<std::string, long long> counts;
  for (const auto& r : records) {
    for (const auto& t : r.turns) {
      for (const auto& w : split_words(t.text)) ++counts[w];
    }
  }
  return build_from_counts(counts);
}

Tokenizer Tokenizer::build_from_tuples(const std::vector<TrainingTuple>& tuples) {
  std::map<std::string, long long> counts;
  for (const auto& t : tuples) {
    for (const auto& h : t.history) {
      for (const auto& w : split_words(h.text)) ++counts[w];
    }
    for (const auto& w : split_words(t.sys_utterance.text)) ++counts[w];
    if (t.usr_reply) {
      for (const auto& w : split_words(t.usr_reply->text)) ++counts[w];
    }
  }
  return build_from_counts(counts);
}

int Tokenizer::word_id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::id_word(int id) const {
  static const std::vector<std::string> specials = {"<pad>", "<unk>", "<eos>",
                                                    "<cls>", "<sys>", "<usr>"};
  if (id < 0 || id >= vocab_size()) throw ValidationError("token id out of range");
  if (id < kNumSpecial) return specials[id];
  return words_[id - kNumSpecial];
}

std::vector<int> Tokenizer::encode_text(const std::string& text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(word_id(w));
  return out;
}

std::vector<int> Tokenizer::encode_turn(const Turn& t) const {
  std::vector<int> out{t.role == Role::system ? kSys : kUsr};
  for (const auto& w : split_words(t.text)) out.push_back(word_id(w));
  out.push_back(kEos);
  return out;
}

std::vector<int> Tokenizer::serialize_history(const std::vector<Turn>& turns,
                                              int max_tokens) const {
  std::vector<int> out;
  for (const auto& t : turns) {
    std::vector<int> enc = encode_turn(t);
    out.insert(out.end(), enc.begin(), enc.end());
  }
  if (static_cast<int>(out.size()) > max_tokens) {
    out.erase(out.begin(), out.end() - max_tokens);
  }
  return out;
}

std::string Tokenizer::decode_words(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kNumSpecial) continue;
    if (!out.empty()) out += " ";
    out += id_word(id);
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const { return nlohmann::json{{"words", words_}}; }

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer t;
  try {
    t.words_ = j.at("words").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tokenizer parse error: ") + e.what());
  }
  t.rebuild_index();
  return t;
}

void Tokenizer::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], kNumSpecial + static_cast<int>(i)).second) {
      throw ValidationError("tokenizer vocabulary contains duplicate word '" + words_[i] + "'");
    }
  }
}

}  // namespace ldpp
