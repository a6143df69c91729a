#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "rulesynth/chat.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <httplib.h>
#include <thread>

#include "rulesynth/error.hpp"

namespace rulesynth {

nlohmann::json ChatRequest::to_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json j = {{"model", model}, {"messages", msgs}, {"temperature", temperature}};
  if (seed) j["seed"] = *seed;
  return j;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

std::string ChatRequest::digest() const { return sha256_hex(to_json().dump()); }

std::string ChatClient::complete(const ChatRequest& request) {
  ++calls_;
  return do_complete(request);
}

LiveClient::LiveClient(LiveClientConfig config) : config_(std::move(config)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::ConfigError,
                "live backend needs an API key in $" + config_.api_key_env, config_.api_key_env);
  }
  api_key_ = key;
}

std::string LiveClient::do_complete(const ChatRequest& request) {
  httplib::Client cli(config_.base_url);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  cli.set_connection_timeout(secs);
  cli.set_read_timeout(secs);
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  const auto body = request.to_json().dump();

  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::seconds(1 << attempt));
    auto res = cli.Post(config_.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::ClientError,
                  "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ClientError, std::string("malformed completion response: ") + e.what());
    }
  }
  throw Error(ErrorCode::ClientError, "chat request failed: " + last_error);
}

namespace {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ReplayClient::ReplayClient(const std::filesystem::path& fixtures) {
  for (const auto& rec : read_jsonl(fixtures)) {
    try {
      by_hash_[rec.at("request_hash").get<std::string>()].push_back(
          rec.at("completion").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, fixtures.string() + ": " + e.what());
    }
  }
}

std::string ReplayClient::do_complete(const ChatRequest& request) {
  const auto hash = request.digest();
  std::lock_guard lock(mu_);
  auto it = by_hash_.find(hash);
  if (it == by_hash_.end() || it->second.empty()) {
    throw Error(ErrorCode::ClientError, "no replay fixture for request " + hash, hash);
  }
  auto out = std::move(it->second.front());
  it->second.pop_front();
  return out;
}

ScriptedClient::ScriptedClient(std::vector<std::string> completions)
    : queue_(completions.begin(), completions.end()) {}

std::unique_ptr<ScriptedClient> ScriptedClient::from_file(const std::filesystem::path& script) {
  std::vector<std::string> completions;
  for (const auto& rec : read_jsonl(script)) {
    try {
      completions.push_back(rec.at("completion").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, script.string() + ": " + e.what());
    }
  }
  return std::make_unique<ScriptedClient>(std::move(completions));
}

std::string ScriptedClient::do_complete(const ChatRequest&) {
  std::lock_guard lock(mu_);
  if (queue_.empty()) throw Error(ErrorCode::ClientError, "scripted backend exhausted");
  auto out = std::move(queue_.front());
  queue_.pop_front();
  return out;
}

RecordingClient::RecordingClient(ChatClient& inner, std::filesystem::path fixtures)
    : inner_(inner), path_(std::move(fixtures)) {}

std::string RecordingClient::do_complete(const ChatRequest& request) {
  auto completion = inner_.complete(request);
  nlohmann::json rec = {{"request_hash", request.digest()}, {"completion", completion}};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << rec.dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_.string());
  return completion;
}

Backend parse_backend(std::string_view name) {
  if (name == "live") return Backend::Live;
  if (name == "replay") return Backend::Replay;
  if (name == "scripted") return Backend::Scripted;
  throw Error(ErrorCode::ConfigError, "unknown backend '" + std::string(name) + "'");
}

std::unique_ptr<ChatClient> make_client(Backend backend, const std::filesystem::path& fixtures,
                                        const LiveClientConfig& live) {
  switch (backend) {
    case Backend::Live:
      return std::make_unique<LiveClient>(live);
    case Backend::Replay:
      return std::make_unique<ReplayClient>(fixtures / "fixtures.jsonl");
    case Backend::Scripted:
      return ScriptedClient::from_file(fixtures / "script.jsonl");
  }
  throw Error(ErrorCode::ConfigError, "unknown backend");
}

}  // namespace rulesynth
