#include "ldpp/adapters.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>
#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "ldpp/error.hpp"

namespace ldpp {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<std::string> read_text_if_present(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read prompt template " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ChatClientSettings ChatClientSettings::from_env() {
  ChatClientSettings s;
  const char* base = std::getenv("LDPP_API_BASE");
  if (base == nullptr || std::string(base).empty()) {
    throw ValidationError("LDPP_API_BASE is not set; external adapters need an endpoint");
  }
  s.base_url = base;
  if (const char* key = std::getenv("LDPP_API_KEY")) s.api_key = key;
  return s;
}

ParsedBaseUrl parse_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("base URL '" + base_url + "' has no scheme (expected http:// or https://)");
  }
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ValidationError("base URL scheme '" + scheme + "' unsupported (http or https)");
  }
  const auto host_start = scheme_end + 3;
  if (host_start >= base_url.size()) {
    throw ValidationError("base URL '" + base_url + "' has no host");
  }
  const auto path_start = base_url.find('/', host_start);
  ParsedBaseUrl parsed;
  if (path_start == std::string::npos) {
    parsed.scheme_host_port = base_url;
  } else {
    parsed.scheme_host_port = base_url.substr(0, path_start);
    parsed.path_prefix = base_url.substr(path_start);
    while (!parsed.path_prefix.empty() && parsed.path_prefix.back() == '/') {
      parsed.path_prefix.pop_back();
    }
  }
  return parsed;
}

ChatClient::ChatClient(ChatClientSettings settings)
    : settings_(std::move(settings)), parsed_(parse_base_url(settings_.base_url)) {
  if (settings_.max_retries < 0) throw ValidationError("max_retries must be >= 0");
  if (settings_.timeout_seconds < 1) throw ValidationError("timeout_seconds must be >= 1");
}

std::string ChatClient::complete(const std::vector<ChatMessage>& messages) const {
  if (messages.empty()) throw ValidationError("chat completion needs at least one message");

  nlohmann::json body;
  body["model"] = settings_.model;
  body["temperature"] = settings_.temperature;
  body["max_tokens"] = settings_.max_tokens;
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!settings_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + settings_.api_key);
  }
  const std::string path = parsed_.path_prefix + "/chat/completions";

  std::string last_error;
  for (int attempt = 0; attempt <= settings_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
    }
    httplib::Client client(parsed_.scheme_host_port);
    client.set_connection_timeout(settings_.timeout_seconds, 0);
    client.set_read_timeout(settings_.timeout_seconds, 0);
    client.set_write_timeout(settings_.timeout_seconds, 0);

    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      spdlog::warn("chat completion attempt {}/{} failed ({})", attempt + 1,
                   settings_.max_retries + 1, last_error);
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      spdlog::warn("chat completion attempt {}/{} failed ({})", attempt + 1,
                   settings_.max_retries + 1, last_error);
      continue;
    }
    if (res->status != 200) {
      throw RuntimeFailure("chat endpoint returned status " + std::to_string(res->status) +
                           ": " + res->body);
    }
    try {
      const auto reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed completion body: ") + e.what();
      spdlog::warn("chat completion attempt {}/{} failed ({})", attempt + 1,
                   settings_.max_retries + 1, last_error);
    }
  }
  throw RuntimeFailure("chat completion failed after " +
                       std::to_string(settings_.max_retries + 1) + " attempts; last error: " +
                       last_error);
}

PromptTemplateSet PromptTemplateSet::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("prompt template directory " + dir.string() + " does not exist");
  }
  PromptTemplateSet set;
  set.critic = read_text_if_present(dir / "critic.txt");
  set.user = read_text_if_present(dir / "user.txt");
  set.completer = read_text_if_present(dir / "completer.txt");
  return set;
}

std::string render_prompt(const std::string& tpl,
                          const std::map<std::string, std::string>& slots) {
  std::string out = tpl;
  for (const auto& [key, value] : slots) {
    const std::string marker = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = out.find(marker, pos)) != std::string::npos) {
      out.replace(pos, marker.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::string render_conversation(const std::vector<Turn>& turns) {
  std::ostringstream out;
  bool first = true;
  for (const auto& t : turns) {
    if (!first) out << '\n';
    out << role_name(t.role) << ": " << t.text;
    first = false;
  }
  return out.str();
}

ExternalEpisodeCritic::ExternalEpisodeCritic(ChatClient client, std::string prompt_template,
                                             std::string scene, std::string description)
    : client_(std::move(client)),
      template_(std::move(prompt_template)),
      scene_(std::move(scene)),
      description_(std::move(description)) {
  if (template_.empty()) throw ValidationError("external critic: empty prompt template");
}

CriticVerdict ExternalEpisodeCritic::vote(const std::vector<Turn>& history, int prev_state,
                                          int new_state, std::mt19937_64& rng) {
  (void)prev_state;
  (void)new_state;
  (void)rng;  // the external judge supplies its own stochasticity
  const std::string prompt = render_prompt(template_, {{"conversation", render_conversation(history)},
                                                       {"scene", scene_},
                                                       {"description", description_}});
  const std::string reply = lower(client_.complete({{"user", prompt}}));

  static const char* names[] = {"worse",  "same",    "better",   "solved",
                                "reject", "neutral", "positive", "donate"};
  std::size_t best_pos = std::string::npos;
  std::string best_name;
  for (const char* name : names) {
    const auto pos = reply.find(name);
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best_name = name;
    }
  }
  if (best_name.empty()) {
    throw RuntimeFailure("external critic reply contains no known label: " + reply);
  }
  return make_verdict(critic_label_from_name(best_name));
}

ExternalUserSimulator::ExternalUserSimulator(ChatClient client, std::string prompt_template)
    : client_(std::move(client)), template_(std::move(prompt_template)) {
  if (template_.empty()) throw ValidationError("external user simulator: empty prompt template");
}

std::pair<Turn, int> ExternalUserSimulator::simulate_user(int state,
                                                          const std::vector<Turn>& history,
                                                          const std::string& topic,
                                                          const std::string& feeling,
                                                          std::mt19937_64& rng) const {
  (void)rng;
  const std::string prompt = render_prompt(template_, {{"conversation", render_conversation(history)},
                                                       {"scene", topic},
                                                       {"description", feeling}});
  std::string reply = trim(client_.complete({{"user", prompt}}));
  std::replace(reply.begin(), reply.end(), '\n', ' ');
  if (reply.empty()) throw RuntimeFailure("external user simulator returned an empty reply");
  // No hidden state outside the scripted world; pair with the external critic.
  return {Turn{Role::user, reply}, state};
}

ExternalCompleter::ExternalCompleter(ChatClient client, std::string prompt_template)
    : client_(std::move(client)), template_(std::move(prompt_template)) {
  if (template_.empty()) throw ValidationError("external completer: empty prompt template");
}

CompletionResult ExternalCompleter::complete(const DialogueRecord& source,
                                             const std::vector<Turn>& prefix, int target_turns,
                                             std::mt19937_64& rng) {
  (void)rng;
  if (prefix.empty()) throw ValidationError("external completer: empty prefix");
  const int need = target_turns - static_cast<int>(prefix.size());
  if (need <= 0) {
    throw ValidationError("external completer: prefix already has " +
                          std::to_string(prefix.size()) + " turns, target is " +
                          std::to_string(target_turns));
  }

  auto meta = [&source](const char* key) {
    auto it = source.meta.find(key);
    return it == source.meta.end() ? std::string() : it->second;
  };
  const std::string prompt =
      render_prompt(template_, {{"conversation", render_conversation(prefix)},
                                {"scene", meta("scene")},
                                {"description", meta("description")}});
  const std::string reply = client_.complete({{"user", prompt}});

  CompletionResult result;
  Role expected = prefix.back().role == Role::system ? Role::user : Role::system;
  std::istringstream lines(reply);
  std::string line;
  while (std::getline(lines, line) && static_cast<int>(result.turns.size()) < need) {
    line = trim(line);
    if (line.empty()) continue;
    Role role;
    std::string text;
    if (lower(line.substr(0, 7)) == "system:") {
      role = Role::system;
      text = trim(line.substr(7));
    } else if (lower(line.substr(0, 5)) == "user:") {
      role = Role::user;
      text = trim(line.substr(5));
    } else {
      throw RuntimeFailure("external completer line has no role prefix: " + line);
    }
    if (role != expected) {
      throw RuntimeFailure("external completer broke role alternation at: " + line);
    }
    if (text.empty()) throw RuntimeFailure("external completer produced an empty turn");
    result.turns.push_back(Turn{role, text});
    expected = role == Role::system ? Role::user : Role::system;
  }
  if (static_cast<int>(result.turns.size()) < need) {
    throw RuntimeFailure("external completer produced " + std::to_string(result.turns.size()) +
                         " turns, needed " + std::to_string(need));
  }
  return result;
}

}  // namespace ldpp
