#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rulesynth {

struct ChatMessage {
  std::string role;  ///< "system", "user" or "assistant"
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  std::optional<std::uint64_t> seed;

  /// Body of a chat-completion HTTP request.
  [[nodiscard]] nlohmann::json to_json() const;
  /// Hex SHA-256 of the canonical (sorted-key, compact) request JSON.
  [[nodiscard]] std::string digest() const;
};

std::string sha256_hex(std::string_view data);

/// Chat-completion backend. Implementations are safe to call from several
/// threads; replay and scripted backends are deterministic.
class ChatClient {
public:
  virtual ~ChatClient() = default;

  /// Completion text for `request`. Throws Error(ClientError).
  std::string complete(const ChatRequest& request);
  [[nodiscard]] std::size_t calls() const { return calls_.load(); }

protected:
  virtual std::string do_complete(const ChatRequest& request) = 0;

private:
  std::atomic<std::size_t> calls_{0};
};

struct LiveClientConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_seconds = 120;
  int max_attempts = 3;
};

/// HTTPS client for the chat-completion API. Throws Error(ConfigError) on
/// construction when the API key variable is unset.
class LiveClient : public ChatClient {
public:
  explicit LiveClient(LiveClientConfig config);

protected:
  std::string do_complete(const ChatRequest& request) override;

private:
  LiveClientConfig config_;
  std::string api_key_;
};

/// Serves completions from line-delimited {"request_hash", "completion"}
/// records. Records sharing a hash are consumed in file order.
class ReplayClient : public ChatClient {
public:
  explicit ReplayClient(const std::filesystem::path& fixtures);

protected:
  std::string do_complete(const ChatRequest& request) override;

private:
  std::mutex mu_;
  std::map<std::string, std::deque<std::string>> by_hash_;
};

/// Returns completions in a fixed order regardless of the request.
class ScriptedClient : public ChatClient {
public:
  explicit ScriptedClient(std::vector<std::string> completions);
  /// Line-delimited {"completion": ...} records.
  static std::unique_ptr<ScriptedClient> from_file(const std::filesystem::path& script);

protected:
  std::string do_complete(const ChatRequest& request) override;

private:
  std::mutex mu_;
  std::deque<std::string> queue_;
};

/// Forwards to another client and appends each exchange as a replay record.
class RecordingClient : public ChatClient {
public:
  RecordingClient(ChatClient& inner, std::filesystem::path fixtures);

protected:
  std::string do_complete(const ChatRequest& request) override;

private:
  ChatClient& inner_;
  std::filesystem::path path_;
  std::mutex mu_;
};

enum class Backend { Live, Replay, Scripted };

Backend parse_backend(std::string_view name);

/// Replay reads `<fixtures>/fixtures.jsonl`, scripted `<fixtures>/script.jsonl`.
std::unique_ptr<ChatClient> make_client(Backend backend, const std::filesystem::path& fixtures,
                                        const LiveClientConfig& live = {});

}  // namespace rulesynth
