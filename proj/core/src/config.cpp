#include "ldpp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ldpp/error.hpp"
#include "ldpp/manifest.hpp"

namespace ldpp {

std::string scheduler_name(Scheduler s) {
  (void)s;
  return "linear";
}

Scheduler scheduler_from_name(const std::string& s) {
  if (s == "linear") return Scheduler::linear;
  throw ValidationError("scheduler: unknown value '" + s + "' (supported: linear)");
}

std::string q_input_mode_name(QInputMode m) {
  return m == QInputMode::expected ? "expected" : "argmax";
}

QInputMode q_input_mode_from_name(const std::string& s) {
  if (s == "expected") return QInputMode::expected;
  if (s == "argmax") return QInputMode::argmax;
  throw ValidationError("q_input_mode: unknown value '" + s + "' (expected|argmax)");
}

namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ValidationError("config field " + field + ": " + rule);
}

}  // namespace

void TrainConfig::validate() const {
  require(K >= 1, "K", "must be >= 1");
  require(T >= 1, "T", "must be >= 1");
  require(L >= 1, "L", "must be >= 1");
  require(d >= 1, "d", "must be >= 1");
  require(d_model >= 4 && d_model % 4 == 0, "d_model", "must be a positive multiple of 4 (head count)");
  require(tau_expectile > 0.0 && tau_expectile < 1.0, "tau_expectile", "must lie in (0, 1)");
  require(tau_awr >= 0.0, "tau_awr", "must be >= 0");
  require(gamma > 0.0 && gamma < 1.0, "gamma",
          "policy-level discount must lie in (0, 1); the token-level objective fixes its own discount at 1");
  require(std::isfinite(delta), "delta", "must be finite");
  require(std::isfinite(eta), "eta", "must be finite");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(epochs_per_stage >= 1, "epochs_per_stage", "must be >= 1");
  require(max_seq_len >= 8, "max_seq_len", "must be >= 8");
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(exp_clip > 0.0, "exp_clip", "must be > 0");
  require(votes >= 1, "votes", "must be >= 1");
  require(max_turns >= 1, "max_turns", "must be >= 1");
  require(max_new_tokens >= 1, "max_new_tokens", "must be >= 1");
  require(max_history_tokens >= 4 && max_history_tokens <= max_seq_len, "max_history_tokens",
          "must lie in [4, max_seq_len]");
  require(gen_pretrain_epochs >= 1, "gen_pretrain_epochs", "must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"K", K},
                        {"T", T},
                        {"L", L},
                        {"d", d},
                        {"d_model", d_model},
                        {"tau_expectile", tau_expectile},
                        {"tau_awr", tau_awr},
                        {"gamma", gamma},
                        {"delta", delta},
                        {"eta", eta},
                        {"batch_size", batch_size},
                        {"epochs_per_stage", epochs_per_stage},
                        {"max_seq_len", max_seq_len},
                        {"learning_rate", learning_rate},
                        {"scheduler", scheduler_name(scheduler)},
                        {"seed", seed},
                        {"q_input_mode", q_input_mode_name(q_input_mode)},
                        {"freeze_codebook_after_stage1", freeze_codebook_after_stage1},
                        {"exp_clip", exp_clip},
                        {"votes", votes},
                        {"max_turns", max_turns},
                        {"max_new_tokens", max_new_tokens},
                        {"max_history_tokens", max_history_tokens},
                        {"gen_pretrain_epochs", gen_pretrain_epochs}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "K", "T", "L", "d", "d_model", "tau_expectile", "tau_awr", "gamma", "delta",
      "eta", "batch_size", "epochs_per_stage", "max_seq_len", "learning_rate",
      "scheduler", "seed", "q_input_mode", "freeze_codebook_after_stage1",
      "exp_clip", "votes", "max_turns", "max_new_tokens", "max_history_tokens",
      "gen_pretrain_epochs"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ValidationError("config: unknown key '" + it.key() + "'");
    }
  }
  TrainConfig c;
  try {
    auto geti = [&](const char* k, int cur) { return j.contains(k) ? j.at(k).get<int>() : cur; };
    auto getd = [&](const char* k, double cur) {
      return j.contains(k) ? j.at(k).get<double>() : cur;
    };
    c.K = geti("K", c.K);
    c.T = geti("T", c.T);
    c.L = geti("L", c.L);
    c.d = geti("d", c.d);
    c.d_model = geti("d_model", c.d_model);
    c.tau_expectile = getd("tau_expectile", c.tau_expectile);
    c.tau_awr = getd("tau_awr", c.tau_awr);
    c.gamma = getd("gamma", c.gamma);
    c.delta = getd("delta", c.delta);
    c.eta = getd("eta", c.eta);
    c.batch_size = geti("batch_size", c.batch_size);
    c.epochs_per_stage = geti("epochs_per_stage", c.epochs_per_stage);
    c.max_seq_len = geti("max_seq_len", c.max_seq_len);
    c.learning_rate = getd("learning_rate", c.learning_rate);
    if (j.contains("scheduler")) c.scheduler = scheduler_from_name(j.at("scheduler").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<long long>();
    if (j.contains("q_input_mode")) {
      c.q_input_mode = q_input_mode_from_name(j.at("q_input_mode").get<std::string>());
    }
    if (j.contains("freeze_codebook_after_stage1")) {
      c.freeze_codebook_after_stage1 = j.at("freeze_codebook_after_stage1").get<bool>();
    }
    c.exp_clip = getd("exp_clip", c.exp_clip);
    c.votes = geti("votes", c.votes);
    c.max_turns = geti("max_turns", c.max_turns);
    c.max_new_tokens = geti("max_new_tokens", c.max_new_tokens);
    c.max_history_tokens = geti("max_history_tokens", c.max_history_tokens);
    c.gen_pretrain_epochs = geti("gen_pretrain_epochs", c.gen_pretrain_epochs);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::hash() const { return sha256_hex(to_json().dump()); }

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) text = "{}";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config file " + path.string() + ": " + e.what());
  }
  return TrainConfig::from_json(j);
}

}  // namespace ldpp
