#include "ldpp/selfplay.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ldpp/error.hpp"
#include "ldpp/json_io.hpp"
#include "ldpp/manifest.hpp"

namespace ldpp {

namespace {

// Stable 64-bit hash so per-case RNG streams do not depend on the standard
// library's std::hash.
std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::mt19937_64 episode_rng(long long seed, const std::string& case_id) {
  const auto h = fnv1a64(case_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

std::string meta_value(const DialogueRecord& rec, const std::string& key) {
  auto it = rec.meta.find(key);
  return it == rec.meta.end() ? std::string() : it->second;
}

int start_state_from_meta(const DialogueRecord& rec) {
  auto it = rec.meta.find("start_state");
  if (it == rec.meta.end()) {
    throw ValidationError("run_episode: case " + rec.id + " has no start_state in meta");
  }
  int state = 0;
  try {
    state = std::stoi(it->second);
  } catch (const std::exception&) {
    throw ValidationError("run_episode: case " + rec.id + " has unparseable start_state '" +
                          it->second + "'");
  }
  if (state < 0 || state > SyntheticSpec::kMaxState) {
    throw ValidationError("run_episode: case " + rec.id + " start_state " +
                          std::to_string(state) + " outside [0, " +
                          std::to_string(SyntheticSpec::kMaxState) + "]");
  }
  return state;
}

PolicyDistribution one_hot(int k, int index) {
  PolicyDistribution d;
  d.probs = Eigen::VectorXd::Zero(k);
  d.probs(index) = 1.0;
  return d;
}

}  // namespace

ScriptedUserSimulator::ScriptedUserSimulator(SyntheticSpec spec)
    : spec_(std::move(spec)), classifier_(spec_) {
  spec_.validate();
}

std::pair<Turn, int> ScriptedUserSimulator::simulate_user(int state,
                                                          const std::vector<Turn>& history,
                                                          const std::string& topic,
                                                          const std::string& feeling,
                                                          std::mt19937_64& rng) const {
  if (state < 0 || state > SyntheticSpec::kMaxState) {
    throw ValidationError("simulate_user: state " + std::to_string(state) + " outside [0, " +
                          std::to_string(SyntheticSpec::kMaxState) + "]");
  }
  if (history.empty() || history.back().role != Role::system) {
    throw ValidationError("simulate_user: history must end with a system turn");
  }

  int new_state = state;
  if (state < SyntheticSpec::kMaxState) {
    // Off-strategy (unclassifiable) replies never count as correct play.
    const auto strategy = classifier_.classify(history.back().text);
    const bool played_correct = strategy.has_value() && *strategy == spec_.correct_strategy[state];
    new_state = transition_state(spec_, state, played_correct, rng);
  }

  const auto& pool = spec_.user_templates[new_state];
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  Turn reply{Role::user, render_template(pool[pick(rng)], topic, feeling)};
  return {reply, new_state};
}

CriticVerdict ScriptedEpisodeCritic::vote(const std::vector<Turn>& history, int prev_state,
                                          int new_state, std::mt19937_64& rng) {
  (void)history;  // the scripted judge reads hidden states only
  return critic_.vote(prev_state, new_state, rng);
}

double critic_reward(EpisodeCritic& critic, const std::vector<Turn>& history, int prev_state,
                     int new_state, int votes, std::mt19937_64& rng) {
  if (votes < 1) {
    throw ValidationError("critic_reward: votes must be >= 1, got " + std::to_string(votes));
  }
  double sum = 0.0;
  for (int i = 0; i < votes; ++i) {
    sum += critic.vote(history, prev_state, new_state, rng).value;
  }
  return sum / static_cast<double>(votes);
}

std::string planner_mode_name(PlannerMode m) {
  switch (m) {
    case PlannerMode::mixture: return "mixture";
    case PlannerMode::argmax: return "argmax";
    case PlannerMode::random: return "random";
  }
  throw ValidationError("unknown planner mode");
}

PlannerMode planner_mode_from_name(const std::string& s) {
  if (s == "mixture") return PlannerMode::mixture;
  if (s == "argmax") return PlannerMode::argmax;
  if (s == "random") return PlannerMode::random;
  throw ValidationError("unknown planner mode '" + s + "' (mixture|argmax|random)");
}

std::string episode_status_name(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::ok: return "ok";
    case EpisodeStatus::generation_failure: return "generation_failure";
    case EpisodeStatus::critic_error: return "critic_error";
  }
  throw ValidationError("unknown episode status");
}

EpisodeStatus episode_status_from_name(const std::string& s) {
  if (s == "ok") return EpisodeStatus::ok;
  if (s == "generation_failure") return EpisodeStatus::generation_failure;
  if (s == "critic_error") return EpisodeStatus::critic_error;
  throw ValidationError("unknown episode status '" + s + "'");
}

EpisodeLog run_episode(ModelBundle& bundle, const UserSimulator& sim, EpisodeCritic& critic,
                       const DialogueRecord& episode_case, const EpisodeParams& params) {
  if (params.max_turns < 1) {
    throw ValidationError("run_episode: max_turns must be >= 1");
  }
  if (params.history_seed_turns < 1) {
    throw ValidationError("run_episode: history_seed_turns must be >= 1");
  }
  if (static_cast<int>(episode_case.turns.size()) < params.history_seed_turns) {
    throw ValidationError("run_episode: case " + episode_case.id + " has only " +
                          std::to_string(episode_case.turns.size()) + " turns, need " +
                          std::to_string(params.history_seed_turns) + " to seed the history");
  }
  if (episode_case.turns[params.history_seed_turns - 1].role != Role::user) {
    throw ValidationError("run_episode: case " + episode_case.id +
                          " seed history must end on a user turn");
  }

  const std::string topic = meta_value(episode_case, "scene");
  const std::string feeling = meta_value(episode_case, "feeling");
  int state = start_state_from_meta(episode_case);
  auto rng = episode_rng(params.seed, episode_case.id);

  EpisodeLog log;
  log.case_id = episode_case.id;
  log.seed = params.seed;
  log.turns.assign(episode_case.turns.begin(),
                   episode_case.turns.begin() + params.history_seed_turns);

  const int k = bundle.codebook.K();
  std::uniform_int_distribution<int> pick_code(0, k - 1);

  for (int turn = 0; turn < params.max_turns; ++turn) {
    PolicyDistribution dist;
    if (params.planner == PlannerMode::random) {
      dist = one_hot(k, pick_code(rng));
    } else {
      dist = plan_policy(bundle, log.turns);
      if (params.planner == PlannerMode::argmax) {
        dist = one_hot(k, argmax_lowest(dist.probs));
      }
    }
    log.policy_trace.push_back(dist);

    const LatentPolicy latent = mix_latent(bundle.codebook, dist);
    const PolicyTokens tokens = pformer_transform(bundle, latent);

    GenerationResult gen;
    try {
      gen = generate_response(bundle, tokens, log.turns, params.decode);
    } catch (const RuntimeFailure& e) {
      spdlog::warn("case {}: generation failed on turn {}: {}", log.case_id, turn + 1, e.what());
      log.status = EpisodeStatus::generation_failure;
      break;
    }
    log.turns.push_back(gen.turn);

    auto [reply, new_state] = sim.simulate_user(state, log.turns, topic, feeling, rng);
    log.turns.push_back(reply);

    double reward = 0.0;
    try {
      reward = critic_reward(critic, log.turns, state, new_state, params.votes, rng);
    } catch (const RuntimeFailure& e) {
      spdlog::warn("case {}: critic failed on turn {}: {}", log.case_id, turn + 1, e.what());
      log.status = EpisodeStatus::critic_error;
      break;
    }
    log.turn_rewards.push_back(reward);
    log.num_turns = turn + 1;
    state = new_state;
    if (reward > params.eta) break;
  }

  if (log.status != EpisodeStatus::ok) {
    // Aborted episodes count as failures at the full budget by default.
    log.num_turns = params.max_turns;
    log.final_reward = -1.0;
    log.success = false;
    return log;
  }
  log.final_reward = log.turn_rewards.back();
  log.success = log.final_reward > params.eta;
  return log;
}

std::vector<EpisodeLog> run_cases(ModelBundle& bundle, const UserSimulator& sim,
                                  EpisodeCritic& critic,
                                  const std::vector<DialogueRecord>& cases,
                                  const EpisodeParams& params, int n_cases) {
  const int available = static_cast<int>(cases.size());
  const int n = n_cases <= 0 ? available : n_cases;
  if (n > available) {
    throw ValidationError("run_cases: requested " + std::to_string(n) + " cases but only " +
                          std::to_string(available) + " available");
  }
  std::vector<EpisodeLog> logs;
  logs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    logs.push_back(run_episode(bundle, sim, critic, cases[static_cast<std::size_t>(i)], params));
  }
  return logs;
}

nlohmann::json EpisodeLog::to_json() const {
  nlohmann::json j;
  j["case_id"] = case_id;
  j["seed"] = seed;
  j["status"] = episode_status_name(status);
  j["success"] = success;
  j["num_turns"] = num_turns;
  j["final_reward"] = final_reward;
  j["turn_rewards"] = turn_rewards;
  nlohmann::json turns_j = nlohmann::json::array();
  for (const auto& t : turns) turns_j.push_back(turn_to_json(t));
  j["turns"] = std::move(turns_j);
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& p : policy_trace) {
    std::vector<double> row(p.probs.data(), p.probs.data() + p.probs.size());
    trace.push_back(row);
  }
  j["policy_trace"] = std::move(trace);
  return j;
}

EpisodeLog EpisodeLog::from_json(const nlohmann::json& j) {
  EpisodeLog log;
  log.case_id = j.at("case_id").get<std::string>();
  log.seed = j.at("seed").get<long long>();
  log.status = episode_status_from_name(j.at("status").get<std::string>());
  log.success = j.at("success").get<bool>();
  log.num_turns = j.at("num_turns").get<int>();
  log.final_reward = j.at("final_reward").get<double>();
  log.turn_rewards = j.at("turn_rewards").get<std::vector<double>>();
  for (const auto& t : j.at("turns")) {
    log.turns.push_back(turn_from_json(t, "episode " + log.case_id));
  }
  for (const auto& row : j.at("policy_trace")) {
    auto vals = row.get<std::vector<double>>();
    PolicyDistribution p;
    p.probs = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                static_cast<Eigen::Index>(vals.size()));
    log.policy_trace.push_back(std::move(p));
  }
  return log;
}

Metrics compute_metrics(const std::vector<EpisodeLog>& logs, double eta, bool exclude_aborted) {
  std::vector<const EpisodeLog*> kept;
  kept.reserve(logs.size());
  for (const auto& log : logs) {
    if (exclude_aborted && log.status != EpisodeStatus::ok) continue;
    kept.push_back(&log);
  }
  if (kept.empty()) {
    throw ValidationError("compute_metrics: no episode logs to aggregate");
  }
  double reward_sum = 0.0;
  double turn_sum = 0.0;
  int successes = 0;
  for (const auto* log : kept) {
    reward_sum += log->final_reward;
    turn_sum += static_cast<double>(log->num_turns);
    if (log->final_reward > eta) ++successes;
  }
  Metrics m;
  m.n_cases = static_cast<int>(kept.size());
  m.ssr = reward_sum / static_cast<double>(m.n_cases);
  m.sr = static_cast<double>(successes) / static_cast<double>(m.n_cases);
  m.avg_t = turn_sum / static_cast<double>(m.n_cases);
  return m;
}

nlohmann::json Metrics::to_json() const {
  return nlohmann::json{{"ssr", ssr}, {"sr", sr}, {"avg_t", avg_t}, {"n_cases", n_cases}};
}

Metrics Metrics::from_json(const nlohmann::json& j) {
  Metrics m;
  m.ssr = j.at("ssr").get<double>();
  m.sr = j.at("sr").get<double>();
  m.avg_t = j.at("avg_t").get<double>();
  m.n_cases = j.at("n_cases").get<int>();
  return m;
}

std::string Metrics::csv_header() const { return "ssr,sr,avg_t,n_cases"; }

std::string Metrics::csv_row() const {
  std::ostringstream out;
  out << format_double(ssr) << ',' << format_double(sr) << ',' << format_double(avg_t) << ','
      << n_cases;
  return out.str();
}

void write_episode_logs(const std::filesystem::path& path, const std::vector<EpisodeLog>& logs) {
  std::ostringstream out;
  for (const auto& log : logs) {
    out << log.to_json().dump() << '\n';
  }
  atomic_write_file(path, out.str());
}

std::vector<EpisodeLog> read_episode_logs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open episode log file " + path.string());
  }
  std::vector<EpisodeLog> logs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      logs.push_back(EpisodeLog::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return logs;
}

void write_metrics(const std::filesystem::path& json_path, const Metrics& metrics) {
  atomic_write_file(json_path, metrics.to_json().dump(2) + "\n");
}

void write_metrics_csv(const std::filesystem::path& csv_path, const Metrics& metrics) {
  atomic_write_file(csv_path, metrics.csv_header() + "\n" + metrics.csv_row() + "\n");
}

}  // namespace ldpp
