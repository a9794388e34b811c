#include "cbr/reuse.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cbr/errors.hpp"
#include "http_util.hpp"

namespace cbr {

using nlohmann::json;

GenerationRequest make_request(std::string intent, const RetrievalResult& retrieval,
                               const CaseBankView& view, std::size_t m,
                               DecodingConfig decoding) {
  GenerationRequest request;
  request.intent = std::move(intent);
  request.decoding = decoding;
  for (const auto& entry : retrieval.entries) {
    if (request.retrieved.size() >= m) break;
    const Case* c = view.find(entry.case_id);
    if (c == nullptr) throw UnknownCaseId("retrieved case '" + entry.case_id + "' not in view");
    request.retrieved.push_back({*c, entry.similarity});
  }
  return request;
}

namespace {

constexpr std::string_view kPreamble =
    "You write functional test scripts. Reuse the functions invoked in the reference "
    "cases wherever they fit the new test intent. Answer with the test script only.\n";

}  // namespace

std::string assemble_prompt(const GenerationRequest& request) {
  std::string out(kPreamble);
  for (std::size_t i = 0; i < request.retrieved.size(); ++i) {
    const Case& c = request.retrieved[i].item;
    out += "\n## Reference case " + std::to_string(i + 1) + "\n";
    out += "Intent: " + c.intent + "\n";
    out += "Script:\n```\n" + c.script;
    if (!c.script.empty() && c.script.back() != '\n') out += "\n";
    out += "```\n";
  }
  out += "\n## New test intent\n" + request.intent + "\n";
  out += "\n## Test script\n";
  return out;
}

std::string CopyTopCaseGenerator::complete(const GenerationRequest& request,
                                           const std::string&) {
  return request.retrieved.empty() ? std::string() : request.retrieved.front().item.script;
}

std::string OracleGenerator::complete(const GenerationRequest& request, const std::string&) {
  if (!request.reference_script) {
    throw InvalidArgument("oracle generator needs request.reference_script");
  }
  return *request.reference_script;
}

NoisyGenerator::NoisyGenerator(double p_keep, double p_add, std::uint64_t seed)
    : p_keep_(p_keep), p_add_(p_add), rng_(seed) {
  if (p_keep < 0.0 || p_keep > 1.0 || p_add < 0.0 || p_add > 1.0) {
    throw InvalidArgument("noisy generator probabilities must lie in [0, 1]");
  }
}

std::string NoisyGenerator::complete(const GenerationRequest& request, const std::string&) {
  std::lock_guard lock(mutex_);
  std::bernoulli_distribution keep(p_keep_);
  std::bernoulli_distribution add(p_add_);
  std::string out;
  if (!request.retrieved.empty()) {
    std::istringstream lines(request.retrieved.front().item.script);
    std::string line;
    while (std::getline(lines, line)) {
      if (!extract_functions(line).empty() && !keep(rng_)) continue;
      out += line;
      out += '\n';
    }
  }
  if (add(rng_)) out += "hallucinated_call_" + std::to_string(++hallucinations_) + "()\n";
  return out;
}

LlmGenerator::LlmGenerator(LlmConfig config) : config_(std::move(config)) {}

std::string LlmGenerator::complete(const GenerationRequest& request, const std::string& prompt) {
  const auto endpoint = detail::parse_base_url(config_.base_url);
  const json body{{"model", config_.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", request.decoding.temperature},
                  {"max_tokens", request.decoding.max_tokens}};
  const std::string payload = body.dump();
  std::string last_error = "no attempt made";

  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    }
    httplib::Client client(endpoint.origin);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(endpoint.path_prefix + "/chat/completions", payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw LlmServiceUnavailable("LLM endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw LlmServiceUnavailable(std::string("unparseable LLM reply: ") + e.what());
    }
  }
  throw LlmServiceUnavailable("LLM endpoint unavailable after " +
                              std::to_string(config_.max_retries + 1) +
                              " attempts: " + last_error);
}

GenerationRecord generate(GenerationRequest request, Generator& generator,
                          const ReuseOptions& options) {
  std::string prompt = assemble_prompt(request);
  while (prompt.size() > options.prompt_budget_chars) {
    if (request.retrieved.size() <= 1) {
      throw ContextOverflow("prompt of " + std::to_string(prompt.size()) +
                            " chars exceeds budget of " +
                            std::to_string(options.prompt_budget_chars));
    }
    request.retrieved.pop_back();
    prompt = assemble_prompt(request);
  }

  const auto start = std::chrono::steady_clock::now();
  std::string draft = generator.complete(request, prompt);
  const auto elapsed = std::chrono::steady_clock::now() - start;

  GenerationRecord record;
  record.request = std::move(request);
  record.prompt = std::move(prompt);
  record.draft = std::move(draft);
  record.generator_id = generator.id();
  record.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  return record;
}

}  // namespace cbr
