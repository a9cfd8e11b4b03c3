#include "ldpp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ldpp/error.hpp"
#include "ldpp/manifest.hpp"

namespace ldpp {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'L', 'D', 'P', 'P'};
constexpr std::uint32_t kVersion = 1;
const char* const kComponents[] = {"encoder", "planner", "codebook", "pformer",
                                   "generator"};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& at) {
  if (at + sizeof(T) > in.size())
    throw ValidationError("checkpoint blob truncated");
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

std::string serialize_params(const std::vector<nn::Parameter*>& params) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params.size());
  for (const nn::Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.append(p->name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        put<double>(out, p->value(i, j));
  }
  return out;
}

void deserialize_params(const std::string& blob, const fs::path& origin,
                        const std::vector<nn::Parameter*>& params) {
  size_t at = 0;
  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a parameter blob: " + origin.string());
  at = sizeof(kMagic);
  if (take<std::uint32_t>(blob, at) != kVersion)
    throw ValidationError("unsupported parameter blob version in " + origin.string());
  const auto count = take<std::uint64_t>(blob, at);
  if (count != params.size())
    throw ValidationError("parameter count mismatch in " + origin.string() + ": blob has " +
                          std::to_string(count) + ", model expects " +
                          std::to_string(params.size()));
  for (nn::Parameter* p : params) {
    const auto name_len = take<std::uint32_t>(blob, at);
    if (at + name_len > blob.size())
      throw ValidationError("checkpoint blob truncated in " + origin.string());
    const std::string name = blob.substr(at, name_len);
    at += name_len;
    const auto rows = static_cast<Eigen::Index>(take<std::uint64_t>(blob, at));
    const auto cols = static_cast<Eigen::Index>(take<std::uint64_t>(blob, at));
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols())
      throw ValidationError("parameter mismatch in " + origin.string() + ": blob has " +
                            name + " (" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "), model expects " + p->name + " (" +
                            std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()) + ")");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) p->value(i, j) = take<double>(blob, at);
  }
}

std::vector<nn::Parameter*> component_params(ModelBundle& b, const std::string& name) {
  std::vector<nn::Parameter*> out;
  if (name == "encoder") collect_params(b.encoder, out);
  else if (name == "planner") collect_params(b.planner, out);
  else if (name == "codebook") out.push_back(&b.codebook.vectors);
  else if (name == "pformer") collect_params(b.pformer, out);
  else if (name == "generator") collect_params(b.generator, out);
  else throw std::logic_error("unknown component " + name);
  return out;
}

std::string codebook_csv(const Codebook& cb) {
  std::string out;
  for (int i = 0; i < cb.K(); ++i) {
    for (int j = 0; j < cb.d(); ++j) {
      if (j) out.push_back(',');
      out += format_double(cb.vectors.value(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

nlohmann::json component_manifest(const std::string& name,
                                  const std::vector<nn::Parameter*>& params,
                                  const ModelBundle& b, int epochs_done) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const nn::Parameter* p : params)
    shapes.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()}});
  return {{"component", name},
          {"params", shapes},
          {"config_hash", b.config.hash()},
          {"stage", b.stage},
          {"epochs_done", epochs_done},
          {"parent", b.parent_hash}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

nlohmann::json StageManifest::to_json() const {
  return {{"stage", stage},
          {"epochs_done", epochs_done},
          {"config_hash", config_hash},
          {"parent", parent},
          {"generator_frozen", generator_frozen}};
}

StageManifest StageManifest::from_json(const nlohmann::json& j) {
  StageManifest m;
  m.stage = j.at("stage").get<int>();
  m.epochs_done = j.at("epochs_done").get<int>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.parent = j.at("parent").get<std::string>();
  m.generator_frozen = j.at("generator_frozen").get<bool>();
  return m;
}

void save_checkpoint(ModelBundle& bundle, const fs::path& dir, int epochs_done) {
  fs::create_directories(dir);
  for (const char* name : kComponents) {
    const fs::path sub = dir / name;
    fs::create_directories(sub);
    const auto params = component_params(bundle, name);
    atomic_write_file(sub / "params.bin", serialize_params(params));
    atomic_write_file(sub / "manifest.json",
                      component_manifest(name, params, bundle, epochs_done).dump(2) + "\n");
  }
  atomic_write_file(dir / "codebook" / "codebook.csv", codebook_csv(bundle.codebook));
  fs::create_directories(dir / "tokenizer");
  atomic_write_file(dir / "tokenizer" / "vocab.json",
                    bundle.tokenizer.to_json().dump(2) + "\n");
  atomic_write_file(dir / "config.json", bundle.config.to_json().dump(2) + "\n");
  StageManifest sm;
  sm.stage = bundle.stage;
  sm.epochs_done = epochs_done;
  sm.config_hash = bundle.config.hash();
  sm.parent = bundle.parent_hash;
  sm.generator_frozen = bundle.generator_frozen;
  atomic_write_file(dir / "stage_manifest.json", sm.to_json().dump(2) + "\n");
}

StageManifest read_stage_manifest(const fs::path& dir) {
  const fs::path p = dir / "stage_manifest.json";
  if (!fs::exists(p))
    throw ValidationError("no stage manifest at " + p.string() +
                          " (not a checkpoint directory?)");
  return StageManifest::from_json(nlohmann::json::parse(read_file(p)));
}

ModelBundle load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "config.json"))
    throw ValidationError("no config.json under " + dir.string() +
                          " (not a checkpoint directory?)");
  const TrainConfig config =
      TrainConfig::from_json(nlohmann::json::parse(read_file(dir / "config.json")));
  Tokenizer tokenizer =
      Tokenizer::from_json(nlohmann::json::parse(read_file(dir / "tokenizer" / "vocab.json")));
  ModelBundle bundle =
      init_models(config, std::move(tokenizer), static_cast<unsigned long>(config.seed));
  for (const char* name : kComponents) {
    const fs::path blob_path = dir / name / "params.bin";
    if (!fs::exists(blob_path))
      throw ValidationError("missing component blob " + blob_path.string());
    deserialize_params(read_file(blob_path), blob_path, component_params(bundle, name));
  }
  const StageManifest sm = read_stage_manifest(dir);
  if (sm.config_hash != config.hash())
    throw ValidationError("stage manifest config hash does not match config.json in " +
                          dir.string());
  bundle.stage = sm.stage;
  bundle.parent_hash = sm.parent;
  bundle.generator_frozen = sm.generator_frozen;
  if (bundle.generator_frozen) set_trainable(bundle.generator, false);
  return bundle;
}

std::string checkpoint_digest(const fs::path& dir) {
  std::string acc;
  for (const char* name : kComponents) {
    const fs::path blob = dir / name / "params.bin";
    if (!fs::exists(blob)) throw ValidationError("missing component blob " + blob.string());
    acc += name;
    acc.push_back(':');
    acc += sha256_file(blob);
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

}  // namespace ldpp
