#pragma once

#include <filesystem>
#include <string>

#include "ldpp/model.hpp"

namespace ldpp {

// Written next to the component subdirectories; records how far training got
// and which checkpoint the weights descended from.
struct StageManifest {
  int stage = 0;
  int epochs_done = 0;
  std::string config_hash;
  std::string parent;  // digest of the parent checkpoint, "" when from scratch
  bool generator_frozen = false;

  nlohmann::json to_json() const;
  static StageManifest from_json(const nlohmann::json& j);
};

// Layout: config.json, stage_manifest.json, tokenizer/vocab.json, and one
// subdirectory per component (encoder/ planner/ codebook/ pformer/ generator/)
// holding params.bin plus manifest.json; the codebook also exports CSV.
void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& dir,
                     int epochs_done);
ModelBundle load_checkpoint(const std::filesystem::path& dir);
StageManifest read_stage_manifest(const std::filesystem::path& dir);

// Content digest over the five parameter blobs; stable across re-saves of
// identical weights, independent of manifest timestamps (there are none here).
std::string checkpoint_digest(const std::filesystem::path& dir);

}  // namespace ldpp
