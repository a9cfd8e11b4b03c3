#include "ldpp/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

using nlohmann::json;

json record_to_json(const DialogueRecord& r) {
  json turns = json::array();
  for (const auto& t : r.turns) turns.push_back(turn_to_json(t));
  json j{{"id", r.id}, {"meta", r.meta}, {"turns", std::move(turns)}};
  if (r.ground_truth_labels) j["ground_truth_labels"] = *r.ground_truth_labels;
  return j;
}

DialogueRecord record_from_json(const json& j, size_t index) {
  const std::string where = "corpus record #" + std::to_string(index);
  if (!j.is_object()) throw ValidationError(where + ": not an object");
  DialogueRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    if (j.contains("meta")) r.meta = j.at("meta").get<std::map<std::string, std::string>>();
    const json& turns = j.at("turns");
    if (!turns.is_array()) throw ValidationError(where + ": 'turns' is not an array");
    for (size_t i = 0; i < turns.size(); ++i) {
      r.turns.push_back(turn_from_json(turns[i], "record '" + r.id + "' turn " + std::to_string(i)));
    }
    if (j.contains("ground_truth_labels")) {
      r.ground_truth_labels = j.at("ground_truth_labels").get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
  validate_record(r);
  return r;
}

}  // namespace

json turn_to_json(const Turn& t) {
  return json{{"role", role_name(t.role)}, {"text", t.text}};
}

Turn turn_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("role") || !j.contains("text")) {
    throw ValidationError(where + ": turn must be an object with 'role' and 'text'");
  }
  Turn t;
  t.role = role_from_name(j.at("role").get<std::string>());
  t.text = j.at("text").get<std::string>();
  return t;
}

std::string corpus_to_json_string(const std::vector<DialogueRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  return arr.dump(1) + "\n";
}

std::vector<DialogueRecord> corpus_from_json_string(const std::string& text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("corpus parse error: ") + e.what());
  }
  if (!arr.is_array()) throw ValidationError("corpus file must be a top-level JSON array");
  std::vector<DialogueRecord> out;
  out.reserve(arr.size());
  std::set<std::string> seen;
  for (size_t i = 0; i < arr.size(); ++i) {
    DialogueRecord r = record_from_json(arr[i], i);
    if (!seen.insert(r.id).second) {
      throw ValidationError("duplicate record id '" + r.id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DialogueRecord> load_corpus(const std::filesystem::path& path, CorpusFormat) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open corpus file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return corpus_from_json_string(buf.str());
}

void save_corpus(const std::vector<DialogueRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write corpus file " + path.string());
  out << corpus_to_json_string(records);
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

json tuple_to_json(const TrainingTuple& t) {
  json hist = json::array();
  for (const auto& h : t.history) hist.push_back(turn_to_json(h));
  json next = json::array();
  for (const auto& h : t.next_history) next.push_back(turn_to_json(h));
  json j{{"dialogue_id", t.dialogue_id},
         {"turn_index", t.turn_index},
         {"history", std::move(hist)},
         {"sys_utterance", turn_to_json(t.sys_utterance)},
         {"next_history", std::move(next)},
         {"is_terminal", t.is_terminal}};
  j["usr_reply"] = t.usr_reply ? turn_to_json(*t.usr_reply) : json(nullptr);
  j["reward"] = t.reward ? json(*t.reward) : json(nullptr);
  if (t.pseudo_label) {
    json probs = json::array();
    for (int i = 0; i < t.pseudo_label->probs.size(); ++i) probs.push_back(t.pseudo_label->probs[i]);
    j["pseudo_label"] = std::move(probs);
  } else {
    j["pseudo_label"] = json(nullptr);
  }
  return j;
}

TrainingTuple tuple_from_json(const json& j) {
  TrainingTuple t;
  try {
    t.dialogue_id = j.at("dialogue_id").get<std::string>();
    t.turn_index = j.at("turn_index").get<int>();
    for (size_t i = 0; i < j.at("history").size(); ++i) {
      t.history.push_back(turn_from_json(j.at("history")[i], "tuple history"));
    }
    t.sys_utterance = turn_from_json(j.at("sys_utterance"), "tuple sys_utterance");
    if (j.contains("usr_reply") && !j.at("usr_reply").is_null()) {
      t.usr_reply = turn_from_json(j.at("usr_reply"), "tuple usr_reply");
    }
    for (size_t i = 0; i < j.at("next_history").size(); ++i) {
      t.next_history.push_back(turn_from_json(j.at("next_history")[i], "tuple next_history"));
    }
    if (j.contains("reward") && !j.at("reward").is_null()) t.reward = j.at("reward").get<double>();
    if (j.contains("pseudo_label") && !j.at("pseudo_label").is_null()) {
      const json& probs = j.at("pseudo_label");
      PolicyDistribution d;
      d.probs.resize(static_cast<int>(probs.size()));
      for (size_t i = 0; i < probs.size(); ++i) d.probs[static_cast<int>(i)] = probs[i].get<double>();
      t.pseudo_label = std::move(d);
    }
    t.is_terminal = j.at("is_terminal").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("tuple parse error: ") + e.what());
  }
  validate_tuple(t);
  return t;
}

std::vector<TrainingTuple> load_tuples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open tuple file " + path.string());
  std::vector<TrainingTuple> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("tuple file " + path.string() + " line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    out.push_back(tuple_from_json(j));
  }
  return out;
}

void save_tuples_jsonl(const std::vector<TrainingTuple>& tuples,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write tuple file " + path.string());
  for (const auto& t : tuples) out << tuple_to_json(t).dump() << "\n";
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

}  // namespace ldpp
