#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cbr/case_bank.hpp"
#include "cbr/metrics.hpp"
#include "cbr/retrieval.hpp"

namespace cbr {

struct DecodingConfig {
  double temperature = 0.0;  // greedy at inference
  int max_tokens = 1024;
};

struct RetrievedCase {
  Case item;
  double similarity = 0.0;
};

struct GenerationRequest {
  std::string intent;
  std::vector<RetrievedCase> retrieved;  // similarity descending
  DecodingConfig decoding;
  // Ground truth, populated only by evaluation harnesses for the oracle backend.
  std::optional<std::string> reference_script;
};

struct GenerationRecord {
  GenerationRequest request;  // as sent, after any context-overflow truncation
  std::string prompt;
  std::string draft;  // verbatim backend output
  std::string generator_id;
  std::int64_t latency_ms = 0;
  std::optional<ScriptScore> score;
};

// Resolves retrieval ids against the view that produced them, keeping at most
// `m` cases in retrieval order.
GenerationRequest make_request(std::string intent, const RetrievalResult& retrieval,
                               const CaseBankView& view, std::size_t m,
                               DecodingConfig decoding = {});

// Fixed template; byte-identical for identical requests. See
// docs/prompt_template.md.
std::string assemble_prompt(const GenerationRequest& request);

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const GenerationRequest& request, const std::string& prompt) = 0;
};

// Returns the top retrieved script unchanged (empty when nothing was retrieved).
class CopyTopCaseGenerator final : public Generator {
 public:
  std::string id() const override { return "copy-top"; }
  std::string complete(const GenerationRequest& request, const std::string& prompt) override;
};

// Echoes request.reference_script. Evaluation fixture only.
class OracleGenerator final : public Generator {
 public:
  std::string id() const override { return "oracle"; }
  std::string complete(const GenerationRequest& request, const std::string& prompt) override;
};

// Copies the top script, keeping each call-bearing line with probability
// p_keep, then appends one hallucinated call line with probability p_add.
class NoisyGenerator final : public Generator {
 public:
  NoisyGenerator(double p_keep, double p_add, std::uint64_t seed);
  std::string id() const override { return "noisy"; }
  std::string complete(const GenerationRequest& request, const std::string& prompt) override;

 private:
  double p_keep_;
  double p_add_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
  std::uint64_t hallucinations_ = 0;
};

struct LlmConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "test-script-llm";
  double temperature = 0.0;
  int max_tokens = 1024;
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_ms = 100;
};

// Client for an OpenAI-style chat-completions endpoint.
class LlmGenerator final : public Generator {
 public:
  explicit LlmGenerator(LlmConfig config);
  std::string id() const override { return "llm:" + config_.model; }
  std::string complete(const GenerationRequest& request, const std::string& prompt) override;

 private:
  LlmConfig config_;
};

struct ReuseOptions {
  std::size_t prompt_budget_chars = 48000;
};

// Assembles the prompt and calls the backend. When the prompt exceeds the
// budget the lowest-similarity case is dropped until it fits; with one case
// left and still too long, throws ContextOverflow.
GenerationRecord generate(GenerationRequest request, Generator& generator,
                          const ReuseOptions& options = {});

}  // namespace cbr
