#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cbr/case_bank.hpp"
#include "cbr/retrieval.hpp"
#include "cbr/reuse.hpp"

namespace cbr {

// ---------------------------------------------------------------- config

using ConfigMap = std::map<std::string, std::string, std::less<>>;

struct ServiceConfig {
  std::size_t retrieval_m = 3;
  std::size_t retrieval_k = 10;
  double infonce_tau = 1.0;
  double rl_beta = 0.1;

  std::string llm_backend = "copy-top";  // copy-top | noisy | llm
  LlmConfig llm;

  std::string embedding_backend = "stub";  // stub | http
  HttpEmbedderConfig embedding{.dimension = 64};
  std::string embedding_adapter;  // optional adapter JSON

  std::size_t prompt_budget_chars = 48000;
  std::string bank_path = "cases.jsonl";
  std::string journal_path = "sessions.jsonl";
  std::string server_host = "127.0.0.1";
  int server_port = 8080;
  std::string static_dir;
};

// Every accepted key, e.g. "retrieval.m".
const std::vector<std::string>& config_keys();

// `key = value` lines; '#' starts a comment line. Throws ConfigError on a
// line without '=' or an unknown key.
ConfigMap parse_config(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);

// "retrieval.m" -> "CBR_RETRIEVAL_M"
std::string env_name_for(std::string_view key);

using EnvLookup = std::function<const char*(const char*)>;
// Environment values win over file values for every known key.
void apply_env_overrides(ConfigMap& config, const EnvLookup& lookup);

// Throws ConfigError for unknown keys or unparsable values.
ServiceConfig service_config_from(const ConfigMap& config);

std::shared_ptr<Retriever> make_retriever(const ServiceConfig& config);
std::shared_ptr<Generator> make_generator(const ServiceConfig& config);

// ---------------------------------------------------------------- sessions

enum class SessionStatus { drafted, revised, retained, discarded };

std::string_view to_string(SessionStatus status);
SessionStatus session_status_from_string(std::string_view text);

struct ReviewSession {
  std::string id;
  std::string intent;
  std::vector<RetrievedCase> retrieved;  // frozen at generation time
  std::uint64_t retrieval_revision = 0;
  std::string draft;
  bool low_confidence = false;  // nothing was retrieved
  bool repetitive_draft = false;
  SessionStatus status = SessionStatus::drafted;
  std::optional<std::string> revised_script;
  std::optional<std::string> case_id;  // set once retained
  std::optional<double> draft_vs_final_ff1;
  std::string created_at;
};

nlohmann::json to_json(const ReviewSession& s);
ReviewSession session_from_json(const nlohmann::json& j);

struct CasePage {
  std::size_t total = 0;
  std::size_t offset = 0;
  std::size_t limit = 0;
  std::vector<Case> items;
};

struct ServiceMetrics {
  std::size_t sessions = 0;
  std::map<std::string, std::size_t> by_status;
  std::size_t cases = 0;
  std::uint64_t bank_revision = 0;
  std::optional<double> mean_draft_vs_final_ff1;  // over retained sessions
  std::vector<double> draft_vs_final_ff1;         // retain order
  double draft_repetition_rate = 0.0;
};

nlohmann::json to_json(const ServiceMetrics& m);

struct ServiceOptions {
  std::size_t m = 3;
  ReuseOptions reuse;
  std::optional<std::filesystem::path> journal;
};

// The Retrieve/Reuse/Revise/Retain loop behind the HTTP API. Sessions live in
// memory with a JSONL journal; the case bank is the durable truth. A retained
// session's case id is "case-<session id>", so a retain is stored at most
// once even across crashes and client retries.
class ReviewService {
 public:
  ReviewService(CaseBank bank, std::shared_ptr<Retriever> retriever,
                std::shared_ptr<Generator> generator, ServiceOptions options);

  // Throws InvalidArgument (empty intent) and backend errors.
  ReviewSession generate(std::string intent);
  // drafted|revised -> revised. Throws SessionNotFound, InvalidTransition.
  ReviewSession revise(std::string_view id, std::string script);
  // drafted|revised -> retained; returns the new case id.
  std::string retain(std::string_view id, std::string final_script);
  // drafted|revised -> discarded.
  ReviewSession discard(std::string_view id);

  std::optional<ReviewSession> session(std::string_view id) const;
  CasePage cases(std::size_t offset, std::size_t limit) const;
  ServiceMetrics metrics() const;

  const CaseBank& bank() const { return bank_; }

  // Test hook, called after the case is durable and before the session is
  // updated or any response is produced.
  void set_after_case_write_hook(std::function<void()> hook) { after_case_write_ = std::move(hook); }

 private:
  ReviewSession& find_open(std::string_view id);
  void journal(const ReviewSession& s);
  void replay_journal();
  std::string new_session_id();

  mutable std::mutex mutex_;
  CaseBank bank_;
  std::shared_ptr<Retriever> retriever_;
  std::shared_ptr<Generator> generator_;
  ServiceOptions options_;
  std::unordered_map<std::string, ReviewSession> sessions_;
  std::vector<std::string> retain_order_;
  std::uint64_t id_state_;
  std::function<void()> after_case_write_;
};

std::string session_case_id(std::string_view session_id);

// ---------------------------------------------------------------- HTTP

struct HttpServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string static_dir;
  int retry_after_seconds = 5;
};

class HttpServer {
 public:
  HttpServer(ReviewService& service, HttpServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; returns the bound port. Throws StorageFailure if binding fails.
  int bind();
  // Blocks until stop().
  void serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cbr
