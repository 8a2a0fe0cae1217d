#include "prescreen/backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace prescreen {

namespace {

using nlohmann::json;
using clock_type = std::chrono::steady_clock;

double elapsed_s(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw error(errc::io_error, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

// Audit fields stored next to each cassette entry: enough to identify the
// request by eye without replaying the full prompt.
json request_digest(const ChatRequest& req) {
  std::string tail;
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == chat_role::user) {
      tail = it->content.substr(0, 96);
      break;
    }
  }
  return json{{"model", req.model_id},
              {"temperature", req.temperature},
              {"message_count", req.messages.size()},
              {"tail", tail}};
}

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw error(errc::config_error, "endpoint url '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {url.substr(0, path_start), base};
}

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendSpec spec) : spec_(std::move(spec)) {
    url_ = split_url(spec_.endpoint_url);
    if (!spec_.auth_env_var.empty()) {
      const char* token = std::getenv(spec_.auth_env_var.c_str());
      if (token == nullptr || *token == '\0') {
        throw error(errc::config_error,
                    "auth env var " + spec_.auth_env_var + " is not set");
      }
      bearer_ = token;
    }
  }

  CompletionOutcome complete(const ChatRequest& req) override {
    CompletionOutcome out;
    for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
      if (attempt > 0) {
        const double backoff = spec_.retry_backoff_s * std::pow(2.0, attempt - 1);
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      }
      out = attempt_once(req);
      // Only transport errors are retried; a timeout is data (NA downstream).
      if (out.status != completion_status::transport) return out;
    }
    return out;
  }

 private:
  CompletionOutcome attempt_once(const ChatRequest& req) {
    CompletionOutcome out;
    const auto start = clock_type::now();

    httplib::Client client(url_.origin);
    const auto whole = static_cast<time_t>(spec_.timeout_s);
    const auto micros =
        static_cast<time_t>((spec_.timeout_s - static_cast<double>(whole)) * 1e6);
    client.set_connection_timeout(whole, micros);
    client.set_read_timeout(whole, micros);
    client.set_write_timeout(whole, micros);
    if (!bearer_.empty()) client.set_bearer_token_auth(bearer_);

    json body{{"model", req.model_id}, {"temperature", req.temperature}};
    body["messages"] = json::array();
    for (const auto& m : req.messages) {
      body["messages"].push_back({{"role", chat_role_str(m.role)}, {"content", m.content}});
    }
    if (req.max_output_tokens) body["max_tokens"] = *req.max_output_tokens;

    auto result = client.Post(url_.base_path + "/chat/completions", body.dump(),
                              "application/json");
    const double latency = elapsed_s(start);

    if (!result) {
      const auto err = result.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                              latency >= 0.9 * spec_.timeout_s);
      out.status = timed_out ? completion_status::timeout : completion_status::transport;
      out.error = httplib::to_string(err);
      out.response.latency_s = latency;
      return out;
    }
    if (result->status == 401 || result->status == 403) {
      out.status = completion_status::auth;
      out.error = "credentials rejected (HTTP " + std::to_string(result->status) + ")";
      return out;
    }
    if (result->status == 429 || result->status >= 500) {
      out.status = completion_status::transport;
      out.error = "HTTP " + std::to_string(result->status);
      return out;
    }
    if (result->status != 200) {
      out.status = completion_status::protocol;
      out.error = "HTTP " + std::to_string(result->status);
      return out;
    }

    try {
      const json reply = json::parse(result->body);
      out.response.content = reply.at("choices").at(0).at("message").at("content");
      if (reply.contains("usage")) {
        const auto& usage = reply["usage"];
        if (usage.contains("prompt_tokens")) {
          out.response.prompt_tokens = usage["prompt_tokens"].get<long>();
        }
        if (usage.contains("completion_tokens")) {
          out.response.completion_tokens = usage["completion_tokens"].get<long>();
        }
      }
    } catch (const json::exception& e) {
      out.status = completion_status::protocol;
      out.error = std::string("malformed response body: ") + e.what();
      return out;
    }
    out.status = completion_status::ok;
    out.response.latency_s = latency;
    return out;
  }

  BackendSpec spec_;
  ParsedUrl url_;
  std::string bearer_;
};

}  // namespace

const char* chat_role_str(chat_role r) noexcept {
  switch (r) {
    case chat_role::system: return "system";
    case chat_role::user: return "user";
    case chat_role::assistant: return "assistant";
  }
  return "?";
}

const char* completion_status_str(completion_status s) noexcept {
  switch (s) {
    case completion_status::ok: return "ok";
    case completion_status::timeout: return "timeout";
    case completion_status::transport: return "transport";
    case completion_status::protocol: return "protocol";
    case completion_status::auth: return "auth";
  }
  return "?";
}

std::string request_fingerprint(const ChatRequest& req) {
  json canonical;
  canonical["model"] = req.model_id;
  canonical["temperature"] = req.temperature;
  canonical["messages"] = json::array();
  for (const auto& m : req.messages) {
    canonical["messages"].push_back(
        {{"role", chat_role_str(m.role)}, {"content", m.content}});
  }
  return sha256_hex(canonical.dump());
}

BackendSpec BackendSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot read backend spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw error(errc::config_error, path.string() + ": " + e.what());
  }

  BackendSpec spec;
  const std::string kind = j.value("kind", "replay");
  if (kind == "http_chat") spec.kind = backend_kind::http_chat;
  else if (kind == "replay") spec.kind = backend_kind::replay;
  else if (kind == "scripted") spec.kind = backend_kind::scripted;
  else throw error(errc::config_error, "unknown backend kind '" + kind + "'");

  spec.endpoint_url = j.value("endpoint_url", "");
  spec.auth_env_var = j.value("auth_env_var", "");
  spec.timeout_s = j.value("timeout_s", 3600.0);
  spec.max_retries = j.value("max_retries", 3);
  spec.retry_backoff_s = j.value("retry_backoff_s", 1.0);
  spec.max_in_flight = j.value("max_in_flight", 4);
  spec.model_id = j.value("model_id", "");
  spec.cassette_path = j.value("cassette_path", "");
  spec.scripted_behavior = j.value("behavior", "");
  if (j.contains("script")) {
    for (const auto& item : j["script"]) {
      spec.script.push_back(
          {item.value("content", ""), item.value("delay_s", 0.0)});
    }
  }
  if (!spec.cassette_path.empty()) {
    std::filesystem::path cp(spec.cassette_path);
    if (cp.is_relative()) spec.cassette_path = (path.parent_path() / cp).string();
  }
  return spec;
}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot read cassette " + path.string());
  Cassette c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw error(errc::io_error,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Entry entry;
    entry.request_digest = j.value("request", json::object()).dump();
    entry.response.content = j.at("response_content").get<std::string>();
    entry.response.latency_s = j.value("latency_s", 0.0);
    if (j.contains("prompt_tokens")) entry.response.prompt_tokens = j["prompt_tokens"].get<long>();
    if (j.contains("completion_tokens")) {
      entry.response.completion_tokens = j["completion_tokens"].get<long>();
    }
    c.entries_[j.at("fingerprint").get<std::string>()] = std::move(entry);
  }
  return c;
}

void Cassette::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write cassette " + path.string());
  for (const auto& [fp, entry] : entries_) {
    json j;
    j["fingerprint"] = fp;
    j["request"] = json::parse(entry.request_digest);
    j["response_content"] = entry.response.content;
    j["latency_s"] = entry.response.latency_s;
    if (entry.response.prompt_tokens) j["prompt_tokens"] = *entry.response.prompt_tokens;
    if (entry.response.completion_tokens) {
      j["completion_tokens"] = *entry.response.completion_tokens;
    }
    out << j.dump() << '\n';
  }
}

std::optional<ChatResponse> Cassette::find(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return it->second.response;
}

void Cassette::put(const std::string& fingerprint, const ChatRequest& req,
                   const ChatResponse& resp, bool overwrite) {
  std::lock_guard lock(write_mutex_);
  auto it = entries_.find(fingerprint);
  if (it != entries_.end() && !overwrite) {
    throw error(errc::duplicate_fingerprint, fingerprint);
  }
  Entry entry;
  entry.request_digest = request_digest(req).dump();
  entry.response = resp;
  entries_[fingerprint] = std::move(entry);
}

CompletionOutcome ReplayBackend::complete(const ChatRequest& req) {
  const std::string fp = request_fingerprint(req);
  CompletionOutcome out;
  if (auto recorded = cassette_.find(fp)) {
    out.status = completion_status::ok;
    out.response.content = recorded->content;
    out.response.latency_s = 0.0;  // replay is instantaneous by definition
    out.response.prompt_tokens = recorded->prompt_tokens;
    out.response.completion_tokens = recorded->completion_tokens;
    return out;
  }
  out.status = completion_status::protocol;
  out.error = "cassette miss: " + fp;
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedReply> sequence, double timeout_s)
    : sequence_(std::move(sequence)), timeout_s_(timeout_s) {}

ScriptedBackend::ScriptedBackend(std::function<ScriptedReply(const ChatRequest&)> handler,
                                 double timeout_s)
    : handler_(std::move(handler)), timeout_s_(timeout_s) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::always_timeout(double timeout_s) {
  return std::make_unique<ScriptedBackend>(
      [](const ChatRequest&) {
        return ScriptedReply{"", std::numeric_limits<double>::infinity()};
      },
      timeout_s);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::fixed(std::string content, double timeout_s) {
  return std::make_unique<ScriptedBackend>(
      [content = std::move(content)](const ChatRequest&) {
        return ScriptedReply{content, 0.0};
      },
      timeout_s);
}

CompletionOutcome ScriptedBackend::complete(const ChatRequest& req) {
  ScriptedReply reply;
  if (handler_) {
    reply = handler_(req);
  } else {
    std::lock_guard lock(mutex_);
    if (next_ >= sequence_.size()) {
      CompletionOutcome out;
      out.status = completion_status::protocol;
      out.error = "script exhausted after " + std::to_string(sequence_.size()) + " replies";
      return out;
    }
    reply = sequence_[next_++];
  }

  CompletionOutcome out;
  if (reply.delay_s > timeout_s_) {
    // Wait out the budget for real, then report the timeout.
    std::this_thread::sleep_for(std::chrono::duration<double>(timeout_s_));
    out.status = completion_status::timeout;
    out.error = "scripted stall exceeded timeout";
    out.response.latency_s = timeout_s_;
    return out;
  }
  if (reply.delay_s > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(reply.delay_s));
  }
  out.status = completion_status::ok;
  out.response.content = reply.content;
  out.response.latency_s = reply.delay_s;
  return out;
}

CompletionOutcome RecordingBackend::complete(const ChatRequest& req) {
  CompletionOutcome out = inner_.complete(req);
  if (out.ok()) {
    cassette_.put(request_fingerprint(req), req, out.response, overwrite_);
  }
  return out;
}

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec) {
  switch (spec.kind) {
    case backend_kind::http_chat:
      if (spec.endpoint_url.empty()) {
        throw error(errc::config_error, "http_chat backend needs endpoint_url");
      }
      return std::make_unique<HttpChatBackend>(spec);
    case backend_kind::replay:
      if (spec.cassette_path.empty()) {
        throw error(errc::config_error, "replay backend needs cassette_path");
      }
      return std::make_unique<ReplayBackend>(Cassette::load(spec.cassette_path));
    case backend_kind::scripted: {
      if (spec.scripted_behavior == "timeout") {
        return ScriptedBackend::always_timeout(spec.timeout_s);
      }
      if (spec.scripted_behavior == "fixed") {
        if (spec.script.empty()) {
          throw error(errc::config_error, "scripted 'fixed' backend needs one script entry");
        }
        return ScriptedBackend::fixed(spec.script.front().content, spec.timeout_s);
      }
      if (spec.scripted_behavior == "sequence") {
        return std::make_unique<ScriptedBackend>(spec.script, spec.timeout_s);
      }
      throw error(errc::config_error,
                  "scripted backend needs behavior: timeout | fixed | sequence");
    }
  }
  throw error(errc::config_error, "unknown backend kind");
}

LatencySummary latency_summary(std::span<const CompletionOutcome> outcomes) {
  LatencySummary s;
  std::vector<double> latencies;
  for (const auto& out : outcomes) {
    if (out.status == completion_status::timeout) {
      ++s.n_timeout;
    } else if (out.ok()) {
      latencies.push_back(out.response.latency_s);
    }
  }
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  double sum = 0.0;
  for (double v : latencies) sum += v;
  s.mean_s = sum / static_cast<double>(latencies.size());
  s.max_s = latencies.back();
  const std::size_t mid = latencies.size() / 2;
  s.p50_s = latencies.size() % 2 == 1 ? latencies[mid]
                                      : 0.5 * (latencies[mid - 1] + latencies[mid]);
  return s;
}

}  // namespace prescreen
