#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prescreen/errors.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Uniform chat-completion interface: a live HTTP backend speaking the open
// chat-completions protocol, a replay backend driven by recorded cassettes,
// and a scripted backend for tests. A timed-out request is an excludable
// outcome (downstream records NA), never a crash, and is never retried.
// ---------------------------------------------------------------------------

enum class chat_role { system, user, assistant };

const char* chat_role_str(chat_role r) noexcept;

struct ChatMessage {
  chat_role role = chat_role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<int> max_output_tokens;
};

struct ChatResponse {
  std::string content;
  double latency_s = 0.0;
  std::optional<long> prompt_tokens;
  std::optional<long> completion_tokens;
};

enum class completion_status { ok, timeout, transport, protocol, auth };

const char* completion_status_str(completion_status s) noexcept;

struct CompletionOutcome {
  completion_status status = completion_status::ok;
  ChatResponse response;
  std::string error;

  bool ok() const { return status == completion_status::ok; }
};

enum class backend_kind { http_chat, replay, scripted };

struct ScriptedReply {
  std::string content;
  double delay_s = 0.0;
};

struct BackendSpec {
  backend_kind kind = backend_kind::replay;
  std::string endpoint_url;   // http_chat: base URL, e.g. http://host:port/v1
  std::string auth_env_var;   // http_chat: bearer token env var; empty = no auth
  double timeout_s = 3600.0;  // live default; tests use sub-second values
  int max_retries = 3;        // transport errors only
  double retry_backoff_s = 1.0;
  int max_in_flight = 4;
  std::string model_id;
  std::string cassette_path;       // replay
  std::string scripted_behavior;   // scripted: "timeout" | "fixed" | "sequence"
  std::vector<ScriptedReply> script;

  // Relative cassette paths resolve against the spec file's directory.
  static BackendSpec from_json_file(const std::filesystem::path& path);
};

// SHA-256 over the canonical serialization of (model_id, messages,
// temperature); invariant to field ordering in config files.
std::string request_fingerprint(const ChatRequest& req);

// JSON-lines store of fingerprint -> recorded response. Reads are lock-free
// after load; writes are serialized.
class Cassette {
 public:
  Cassette() = default;
  Cassette(Cassette&& other) noexcept : entries_(std::move(other.entries_)) {}
  Cassette& operator=(Cassette&& other) noexcept {
    entries_ = std::move(other.entries_);
    return *this;
  }

  static Cassette load(const std::filesystem::path& path);  // throws io_error
  void save(const std::filesystem::path& path) const;       // deterministic order

  std::optional<ChatResponse> find(const std::string& fingerprint) const;

  // Throws duplicate_fingerprint when the entry exists and overwrite is off.
  void put(const std::string& fingerprint, const ChatRequest& req, const ChatResponse& resp,
           bool overwrite = false);

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string request_digest;  // human-readable audit fields, serialized JSON
    ChatResponse response;
  };
  std::map<std::string, Entry> entries_;
  mutable std::mutex write_mutex_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Safe to call concurrently up to the spec's max_in_flight.
  virtual CompletionOutcome complete(const ChatRequest& req) = 0;
};

// Throws config_error (bad spec, unresolvable auth) or io_error (cassette).
std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec);

class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}
  CompletionOutcome complete(const ChatRequest& req) override;

 private:
  Cassette cassette_;
};

// Test double: returns canned replies, sleeping delay_s per reply; a delay
// past the configured timeout yields a real timeout outcome.
class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend(std::vector<ScriptedReply> sequence, double timeout_s);
  ScriptedBackend(std::function<ScriptedReply(const ChatRequest&)> handler, double timeout_s);

  static std::unique_ptr<ScriptedBackend> always_timeout(double timeout_s);
  static std::unique_ptr<ScriptedBackend> fixed(std::string content, double timeout_s);

  CompletionOutcome complete(const ChatRequest& req) override;

 private:
  std::function<ScriptedReply(const ChatRequest&)> handler_;
  std::vector<ScriptedReply> sequence_;
  std::size_t next_ = 0;
  double timeout_s_;
  std::mutex mutex_;
};

// Passes requests through and stores successful responses in the cassette.
class RecordingBackend : public ChatBackend {
 public:
  RecordingBackend(ChatBackend& inner, Cassette& cassette, bool overwrite = false)
      : inner_(inner), cassette_(cassette), overwrite_(overwrite) {}

  CompletionOutcome complete(const ChatRequest& req) override;

 private:
  ChatBackend& inner_;
  Cassette& cassette_;
  bool overwrite_;
};

struct LatencySummary {
  double mean_s = 0.0;
  double p50_s = 0.0;
  double max_s = 0.0;
  std::size_t n_timeout = 0;
};

// Order statistics over successful responses; timeouts are counted, not
// averaged.
LatencySummary latency_summary(std::span<const CompletionOutcome> outcomes);

}  // namespace prescreen
