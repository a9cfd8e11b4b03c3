#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldpp/augment.hpp"
#include "ldpp/selfplay.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

// HTTP endpoint for an OpenAI-compatible chat-completion service. The base
// URL and key come from LDPP_API_BASE / LDPP_API_KEY; secrets never live in
// the config file.
struct ChatClientSettings {
  std::string base_url;  // e.g. http://localhost:8089/v1
  std::string api_key;   // optional; sent as a bearer token when set
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 256;
  int max_retries = 3;
  int timeout_seconds = 30;

  static ChatClientSettings from_env();
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

// Split into scheme://host[:port] and a path prefix ("/v1" above).
struct ParsedBaseUrl {
  std::string scheme_host_port;
  std::string path_prefix;  // no trailing slash
};

ParsedBaseUrl parse_base_url(const std::string& base_url);

// Blocking client with bounded retries on transport errors and 5xx replies.
// Exhausted retries raise RuntimeFailure.
class ChatClient {
 public:
  explicit ChatClient(ChatClientSettings settings);

  std::string complete(const std::vector<ChatMessage>& messages) const;

  const ChatClientSettings& settings() const { return settings_; }

 private:
  ChatClientSettings settings_;
  ParsedBaseUrl parsed_;
};

// Prompt text files under a templates directory: critic.txt, user.txt,
// completer.txt. Placeholders {conversation}, {scene} and {description} are
// substituted at call time; absent files only fail the adapters that need
// them.
struct PromptTemplateSet {
  std::optional<std::string> critic;
  std::optional<std::string> user;
  std::optional<std::string> completer;

  static PromptTemplateSet load(const std::filesystem::path& dir);
};

std::string render_prompt(const std::string& tpl,
                          const std::map<std::string, std::string>& slots);

std::string render_conversation(const std::vector<Turn>& turns);

// Judges the conversation text with one chat call per vote; the reply must
// contain one of the four label names. Hidden states are ignored.
class ExternalEpisodeCritic : public EpisodeCritic {
 public:
  ExternalEpisodeCritic(ChatClient client, std::string prompt_template, std::string scene,
                        std::string description);

  CriticVerdict vote(const std::vector<Turn>& history, int prev_state, int new_state,
                     std::mt19937_64& rng) override;

 private:
  ChatClient client_;
  std::string template_;
  std::string scene_;
  std::string description_;
};

// Produces user replies with a chat call. Carries no hidden state (returns
// the input state unchanged), so it only makes sense together with the
// external critic.
class ExternalUserSimulator : public UserSimulator {
 public:
  ExternalUserSimulator(ChatClient client, std::string prompt_template);

  std::pair<Turn, int> simulate_user(int state, const std::vector<Turn>& history,
                                     const std::string& topic, const std::string& feeling,
                                     std::mt19937_64& rng) const override;

 private:
  ChatClient client_;
  std::string template_;
};

// Continues a dialogue prefix via chat completion. The reply must alternate
// "system: ..." / "user: ..." lines; anything else raises RuntimeFailure so
// the augmentation loop skips the record.
class ExternalCompleter : public DialogueCompleter {
 public:
  ExternalCompleter(ChatClient client, std::string prompt_template);

  CompletionResult complete(const DialogueRecord& source, const std::vector<Turn>& prefix,
                            int target_turns, std::mt19937_64& rng) override;

 private:
  ChatClient client_;
  std::string template_;
};

}  // namespace ldpp
