#pragma once

#include <nlohmann/json.hpp>
#include <filesystem>
#include <vector>

#include "ldpp/types.hpp"

namespace ldpp {

enum class CorpusFormat { json };

std::vector<DialogueRecord> load_corpus(const std::filesystem::path& path,
                                        CorpusFormat format = CorpusFormat::json);
void save_corpus(const std::vector<DialogueRecord>& records, const std::filesystem::path& path);

std::string corpus_to_json_string(const std::vector<DialogueRecord>& records);
std::vector<DialogueRecord> corpus_from_json_string(const std::string& text);

std::vector<TrainingTuple> load_tuples_jsonl(const std::filesystem::path& path);
void save_tuples_jsonl(const std::vector<TrainingTuple>& tuples,
                       const std::filesystem::path& path);

nlohmann::json turn_to_json(const Turn& t);
Turn turn_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json tuple_to_json(const TrainingTuple& t);
TrainingTuple tuple_from_json(const nlohmann::json& j);

}  // namespace ldpp
