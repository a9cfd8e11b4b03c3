#include "ldpp/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

const char* kGreet[] = {
    "hello and welcome i am here for you today",
    "hi there thanks for reaching out today",
    "good morning i am ready to listen",
    "hello nice to meet you lets begin",
    "welcome i am happy you came to talk",
    "hi welcome in you can speak freely here",
    "hello thanks for coming to session today",
    "good day i am here and listening",
    "hi i am pleased to meet you",
    "hello you reached the right place to talk",
    "welcome aboard lets start when you are ready",
    "hi thanks for making time to talk today",
    "hello i am all ears whenever you are ready",
    "good to see you here welcome",
    "hi lets begin our time together",
    "hello welcome back i am listening",
    "greetings i am here to support you today",
    "hi this is a good place to start talking",
    "hello take a seat and lets talk",
    "welcome friend i am ready when you are",
};

const char* kExplore[] = {
    "can you tell me more about the {topic}",
    "what exactly happened with the {topic}",
    "when did the trouble with the {topic} begin",
    "how long has the {topic} been like this",
    "describe what is going on with the {topic}",
    "what changed recently around the {topic}",
    "who else is involved in the {topic}",
    "where does the {topic} cause the most trouble",
    "tell me the details of the {topic}",
    "what part of the {topic} worries you most",
    "how often does the {topic} come up",
    "what happens on a typical day with the {topic}",
    "can you walk me through the {topic} situation",
    "what have you noticed about the {topic} lately",
    "tell me which moments make the {topic} harder",
    "what would you say triggers the {topic}",
    "how did the {topic} look a month ago",
    "what did you attempt before with the {topic}",
    "is there more background about the {topic}",
    "which part of the {topic} should we unpack first",
};

const char* kReflect[] = {
    "it sounds like the {topic} leaves you {feeling}",
    "i hear how {feeling} the {topic} makes you",
    "it seems the {topic} has felt really heavy",
    "you sound {feeling} when the {topic} comes up",
    "i sense a lot of {feeling} around the {topic}",
    "so the {topic} leaves you feeling {feeling}",
    "i understand the {topic} weighs on you",
    "that {feeling} feeling around the {topic} is valid",
    "i hear you the {topic} has been a lot",
    "it makes sense the {topic} leaves you {feeling}",
    "you seem {feeling} about the {topic} right now",
    "carrying the {topic} alone sounds exhausting",
    "i can hear the strain the {topic} causes",
    "the {topic} clearly stirs up {feeling} feelings",
    "being {feeling} over the {topic} is understandable",
    "i notice the {topic} brings up {feeling} emotions",
    "it sounds as if the {topic} drains you",
    "your words about the {topic} sound {feeling}",
    "i understand why the {topic} feels {feeling}",
    "that is a {feeling} spot the {topic} put you in",
};

const char* kComfort[] = {
    "it is okay take a slow breath with me",
    "everything will be alright just breathe",
    "stay calm you are doing fine right now",
    "take it easy we can go slowly",
    "breathe in and out soft and slow",
    "it is alright to pause and rest a moment",
    "gentle now everything is okay here",
    "relax your shoulders and settle in",
    "you are okay this moment will pass",
    "let us slow down and find some calm",
    "soothe yourself with one quiet breath",
    "no rush just rest here a little",
    "easy does it stay with your breath",
    "all is calm you can let go for now",
    "comfort first take another soft breath",
    "hold steady everything is fine",
    "be kind to yourself and breathe slowly",
    "settle down gently all is well",
    "peace for a moment just breathe okay",
    "quiet now rest your mind a bit",
};

const char* kSuggest[] = {
    "maybe you could try a small plan for the {topic}",
    "one idea is to take a single step on the {topic}",
    "you could set a tiny goal for the {topic}",
    "consider making a short list about the {topic}",
    "how about trying a new routine for the {topic}",
    "a practical step would be to schedule the {topic}",
    "try breaking the {topic} into smaller pieces",
    "perhaps draft a simple plan for the {topic}",
    "an option is to ask for help with the {topic}",
    "you might try writing down the {topic} steps",
    "consider one small action on the {topic} tomorrow",
    "maybe set a timer and tackle the {topic} briefly",
    "a good move is to plan the {topic} tonight",
    "try one concrete change around the {topic}",
    "you could experiment with a new approach to the {topic}",
    "perhaps commit to a five minute start on the {topic}",
    "a quick win would be sorting one part of the {topic}",
    "map out the {topic} into steps you control",
    "pick the smallest piece of the {topic} and try it",
    "build a tiny habit that chips at the {topic}",
};

const char* kClose[] = {
    "i am glad we got the {topic} to a better place goodbye",
    "great work today take care and goodbye",
    "good luck with the {topic} you are set",
    "it helped to talk lets wrap up here",
    "farewell and remember you can return anytime",
    "we reached a solid end for the {topic} goodbye",
    "take care of yourself until next time",
    "i am proud of the progress on the {topic} bye",
    "this is a fine place to stop take care",
    "goodbye for now the {topic} is in good hands",
    "well done today we can end here",
    "wishing you luck as you finish the {topic}",
    "lets close here you handled the {topic} well",
    "bye for now and keep up the progress",
    "the {topic} is sorted lets say goodbye",
    "i am glad this helped see you around",
    "that wraps things up go well",
    "goodbye and congratulations on the {topic}",
    "our work is done enjoy the progress bye",
    "all set then farewell until we meet again",
};

const char* kUserState0[] = {
    "i feel completely {feeling} about my {topic}",
    "my {topic} is a mess and i am {feeling}",
    "everything about my {topic} makes me {feeling}",
    "i am so {feeling} i cannot even face the {topic}",
    "the {topic} has me {feeling} all the time",
    "honestly my {topic} is falling apart",
    "i do not know where to start the {topic} is too much",
    "i am {feeling} and the {topic} keeps getting worse",
};

const char* kUserState1[] = {
    "well it started last month when the {topic} went wrong",
    "the {topic} got bad after a big change",
    "mostly it is the {topic} during the week",
    "it happens whenever the {topic} comes up at night",
    "i think the {topic} broke down slowly",
    "there is a lot of pressure from the {topic} daily",
    "the {topic} went sideways and i kept quiet",
    "looking back the {topic} has been off for weeks",
};

const char* kUserState2[] = {
    "yes that is exactly how i feel about the {topic}",
    "you get it the {topic} really is like that",
    "hearing that helps it is how the {topic} feels",
    "right i am {feeling} just like you said",
    "that is it the {topic} has been that heavy",
    "thank you for understanding the {topic} part",
    "exactly those {feeling} feelings are what i have",
    "yes you named what the {topic} does to me",
};

const char* kUserState3[] = {
    "that plan for my {topic} sounds doable",
    "okay i could give that a go for the {topic}",
    "a small step on the {topic} feels possible now",
    "i like that idea for handling the {topic}",
    "i feel a bit lighter maybe the {topic} can improve",
    "that makes sense i will start small with the {topic}",
    "i am willing to work on the {topic} that way",
    "good thinking the {topic} seems manageable now",
};

const char* kUserState4[] = {
    "thank you so much i know what to do about the {topic} now",
    "this really helped the {topic} feels under control",
    "i feel much better about the {topic} thanks again",
    "great i have a clear path for the {topic} now",
    "thanks a lot the {topic} is finally sorted in my head",
    "i am relieved the {topic} has a way forward",
    "perfect i can handle the {topic} from here",
    "thank you i feel confident about the {topic} now",
};

const char* kTopics[] = {"job",       "exam",   "breakup",    "budget",   "health",
                         "move",      "project", "friendship", "deadline", "family"};

const char* kFeelings[] = {"anxious", "sad",  "overwhelmed", "worried",
                           "frustrated", "lost", "stressed",    "drained"};

std::vector<std::string> to_vec(const char* const* arr, size_t n) {
  return std::vector<std::string>(arr, arr + n);
}

int draw_index(std::mt19937_64& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

bool draw_prob(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

std::mt19937_64 derived_rng(long long seed, long long a, long long b = 0) {
  std::seed_seq seq{static_cast<unsigned long long>(seed), static_cast<unsigned long long>(a),
                    static_cast<unsigned long long>(b)};
  return std::mt19937_64(seq);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_strategies() < 2) throw ValidationError("synthetic spec: need at least 2 strategies");
  for (const auto& s : strategies) {
    if (s.name.empty()) throw ValidationError("synthetic spec: strategy with empty name");
    if (s.templates.empty()) {
      throw ValidationError("synthetic spec: strategy '" + s.name + "' has no templates");
    }
  }
  for (int st = 0; st <= kMaxState; ++st) {
    int c = correct_strategy[st];
    if (c < 0 || c >= num_strategies()) {
      throw ValidationError("synthetic spec: correct_strategy for state " + std::to_string(st) +
                            " out of range");
    }
    if (user_templates[st].empty()) {
      throw ValidationError("synthetic spec: no user templates for state " + std::to_string(st));
    }
  }
  if (p_up <= 0.0 || p_up > 1.0) {
    throw ValidationError("synthetic spec: p_up must lie in (0, 1] or the solved state is unreachable");
  }
  if (p_down < 0.0 || p_down > 1.0) throw ValidationError("synthetic spec: p_down outside [0, 1]");
  if (p_correct < 0.0 || p_correct > 1.0) {
    throw ValidationError("synthetic spec: p_correct outside [0, 1]");
  }
  if (topics.empty() || feelings.empty()) {
    throw ValidationError("synthetic spec: topics and feelings must be non-empty");
  }
  if (start_state_weights.size() != static_cast<size_t>(kMaxState) ||
      std::any_of(start_state_weights.begin(), start_state_weights.end(),
                  [](double w) { return w < 0.0; }) ||
      std::accumulate(start_state_weights.begin(), start_state_weights.end(), 0.0) <= 0.0) {
    throw ValidationError(
        "synthetic spec: start_state_weights must be 4 non-negative weights (states 0..3) with positive sum");
  }
  if (max_sys_turns < 1) throw ValidationError("synthetic spec: max_sys_turns must be >= 1");
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json strats = nlohmann::json::array();
  for (const auto& s : strategies) {
    strats.push_back({{"name", s.name}, {"templates", s.templates}});
  }
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : user_templates) users.push_back(u);
  return nlohmann::json{{"strategies", strats},
                        {"user_templates", users},
                        {"topics", topics},
                        {"feelings", feelings},
                        {"correct_strategy", correct_strategy},
                        {"p_up", p_up},
                        {"p_down", p_down},
                        {"p_correct", p_correct},
                        {"start_state_weights", start_state_weights},
                        {"max_sys_turns", max_sys_turns}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.strategies.clear();
    for (const auto& e : j.at("strategies")) {
      s.strategies.push_back({e.at("name").get<std::string>(),
                              e.at("templates").get<std::vector<std::string>>()});
    }
    auto users = j.at("user_templates");
    if (users.size() != s.user_templates.size()) {
      throw ValidationError("synthetic spec: user_templates must list 5 states");
    }
    for (size_t i = 0; i < users.size(); ++i) {
      s.user_templates[i] = users[i].get<std::vector<std::string>>();
    }
    s.topics = j.at("topics").get<std::vector<std::string>>();
    s.feelings = j.at("feelings").get<std::vector<std::string>>();
    auto correct = j.at("correct_strategy").get<std::vector<int>>();
    if (correct.size() != s.correct_strategy.size()) {
      throw ValidationError("synthetic spec: correct_strategy must list 5 states");
    }
    std::copy(correct.begin(), correct.end(), s.correct_strategy.begin());
    s.p_up = j.at("p_up").get<double>();
    s.p_down = j.at("p_down").get<double>();
    s.p_correct = j.at("p_correct").get<double>();
    s.start_state_weights = j.at("start_state_weights").get<std::vector<double>>();
    s.max_sys_turns = j.at("max_sys_turns").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic spec parse error: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::default_spec() {
  SyntheticSpec s;
  s.strategies = {{"greet", to_vec(kGreet, std::size(kGreet))},
                  {"explore", to_vec(kExplore, std::size(kExplore))},
                  {"reflect", to_vec(kReflect, std::size(kReflect))},
                  {"comfort", to_vec(kComfort, std::size(kComfort))},
                  {"suggest", to_vec(kSuggest, std::size(kSuggest))},
                  {"close", to_vec(kClose, std::size(kClose))}};
  s.user_templates[0] = to_vec(kUserState0, std::size(kUserState0));
  s.user_templates[1] = to_vec(kUserState1, std::size(kUserState1));
  s.user_templates[2] = to_vec(kUserState2, std::size(kUserState2));
  s.user_templates[3] = to_vec(kUserState3, std::size(kUserState3));
  s.user_templates[4] = to_vec(kUserState4, std::size(kUserState4));
  s.topics = to_vec(kTopics, std::size(kTopics));
  s.feelings = to_vec(kFeelings, std::size(kFeelings));
  // comfort soothes but never advances the hidden state anywhere
  s.correct_strategy = {0, 1, 2, 4, 5};
  s.validate();
  return s;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open synthetic spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("synthetic spec " + path.string() + ": " + e.what());
  }
  return SyntheticSpec::from_json(j);
}

std::string render_template(const std::string& tpl, const std::string& topic,
                            const std::string& feeling) {
  std::string out;
  out.reserve(tpl.size() + 16);
  for (size_t i = 0; i < tpl.size();) {
    if (tpl.compare(i, 7, "{topic}") == 0) {
      out += topic;
      i += 7;
    } else if (tpl.compare(i, 9, "{feeling}") == 0) {
      out += feeling;
      i += 9;
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

int behavior_pick_strategy(const SyntheticSpec& spec, int state, std::mt19937_64& rng) {
  int correct = spec.correct_strategy[state];
  if (draw_prob(rng, spec.p_correct)) return correct;
  int other = draw_index(rng, spec.num_strategies() - 1);
  return other < correct ? other : other + 1;
}

int transition_state(const SyntheticSpec& spec, int state, bool played_correct,
                     std::mt19937_64& rng) {
  if (played_correct) {
    if (draw_prob(rng, spec.p_up)) return std::min(state + 1, SyntheticSpec::kMaxState);
    return state;
  }
  if (draw_prob(rng, spec.p_down)) return std::max(state - 1, 0);
  return state;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

StrategyClassifier::StrategyClassifier(const SyntheticSpec& spec) {
  std::map<std::string, int> strategy_count;
  std::vector<std::set<std::string>> raw(spec.num_strategies());
  for (int s = 0; s < spec.num_strategies(); ++s) {
    for (const auto& tpl : spec.strategies[s].templates) {
      for (const auto& w : split_words(tpl)) {
        if (w == "{topic}" || w == "{feeling}") continue;
        raw[s].insert(w);
      }
    }
    for (const auto& w : raw[s]) ++strategy_count[w];
  }
  bags_.resize(raw.size());
  for (size_t s = 0; s < raw.size(); ++s) {
    for (const auto& w : raw[s]) {
      if (strategy_count[w] < 3) bags_[s].push_back(w);
    }
    std::sort(bags_[s].begin(), bags_[s].end());
  }
}

std::optional<int> StrategyClassifier::classify(const std::string& text) const {
  std::vector<std::string> words = split_words(text);
  int best = -1;
  int best_score = 0;
  for (size_t s = 0; s < bags_.size(); ++s) {
    int score = 0;
    for (const auto& w : words) {
      if (std::binary_search(bags_[s].begin(), bags_[s].end(), w)) ++score;
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(s);
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

std::vector<DialogueRecord> generate_synthetic(const SyntheticSpec& spec, int n, long long seed) {
  spec.validate();
  if (n < 0) throw ValidationError("generate_synthetic: n must be >= 0");
  std::vector<DialogueRecord> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng = derived_rng(seed, i);
    const std::string& topic = spec.topics[draw_index(rng, static_cast<int>(spec.topics.size()))];
    const std::string& feeling =
        spec.feelings[draw_index(rng, static_cast<int>(spec.feelings.size()))];
    std::discrete_distribution<int> start_dist(spec.start_state_weights.begin(),
                                               spec.start_state_weights.end());
    int state = start_dist(rng);

    DialogueRecord rec;
    rec.id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
    rec.meta["scene"] = topic;
    rec.meta["description"] = "seeking support about the " + topic;
    rec.meta["feeling"] = feeling;
    rec.meta["start_state"] = std::to_string(state);
    rec.ground_truth_labels = std::vector<int>{};

    auto user_turn = [&](int st) {
      const auto& pool = spec.user_templates[st];
      return Turn{Role::user, render_template(pool[draw_index(rng, static_cast<int>(pool.size()))],
                                              topic, feeling)};
    };
    auto sys_turn = [&](int strat) {
      const auto& pool = spec.strategies[strat].templates;
      return Turn{Role::system, render_template(pool[draw_index(rng, static_cast<int>(pool.size()))],
                                                topic, feeling)};
    };

    rec.turns.push_back(user_turn(state));
    std::vector<int> trace;
    for (int t = 0; t < spec.max_sys_turns; ++t) {
      bool closing_exchange = (state == SyntheticSpec::kMaxState);
      int strat = behavior_pick_strategy(spec, state, rng);
      rec.turns.push_back(sys_turn(strat));
      rec.ground_truth_labels->push_back(strat);
      state = transition_state(spec, state, strat == spec.correct_strategy[state], rng);
      trace.push_back(state);
      rec.turns.push_back(user_turn(state));
      if (closing_exchange) break;
    }
    std::string trace_csv;
    for (size_t t = 0; t < trace.size(); ++t) {
      if (t) trace_csv += ",";
      trace_csv += std::to_string(trace[t]);
    }
    rec.meta["state_trace"] = trace_csv;
    validate_record(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

SyntheticStateInfo parse_state_meta(const DialogueRecord& record) {
  SyntheticStateInfo info;
  auto it = record.meta.find("start_state");
  auto jt = record.meta.find("state_trace");
  if (it == record.meta.end() || jt == record.meta.end()) {
    throw ValidationError("record '" + record.id +
                          "' lacks start_state/state_trace meta (not a synthetic record)");
  }
  info.start_state = std::stoi(it->second);
  std::stringstream ss(jt->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) info.trace.push_back(std::stoi(part));
  }
  int sys = count_system_turns(record.turns);
  if (static_cast<int>(info.trace.size()) != sys) {
    throw ValidationError("record '" + record.id + "': state_trace length " +
                          std::to_string(info.trace.size()) + " != system turn count " +
                          std::to_string(sys));
  }
  return info;
}

}  // namespace ldpp
