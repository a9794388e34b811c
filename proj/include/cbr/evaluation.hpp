#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/case_bank.hpp"
#include "cbr/metrics.hpp"
#include "cbr/retrieval.hpp"
#include "cbr/reuse.hpp"
#include "cbr/script_analysis.hpp"

namespace cbr {

// Module `module` becomes available at timeline position `step`.
struct DriftEvent {
  std::size_t step = 0;
  std::size_t module = 0;
};

struct SyntheticCorpusSpec {
  std::size_t function_vocabulary_size = 8;  // per module
  std::size_t cases_per_module = 20;
  std::size_t test_cases_per_module = 0;  // held-out split, drawn after the timeline
  std::size_t modules = 2;
  std::vector<DriftEvent> drift_schedule;  // modules not listed start at step 0
  double paraphrase_noise = 0.3;           // probability of each optional intent phrase
  std::uint64_t seed = 0;
};

struct CorpusCase {
  Case item;
  FunctionCallSet calls;  // ground truth recorded by the generator
  std::size_t module = 0;
  std::size_t cluster = 0;
  std::size_t step = 0;  // timeline position; test cases use the timeline length
};

struct SyntheticCorpus {
  std::vector<std::string> module_names;
  std::vector<CorpusCase> timeline;  // ordered; respects the drift schedule
  std::vector<CorpusCase> test;
};

// Deterministic in `spec`. Throws InvalidArgument for an infeasible drift
// schedule (a step where no available module has cases left).
SyntheticCorpus generate_corpus(const SyntheticCorpusSpec& spec);

// Paraphrase clusters built so the raw nearest neighbour is usually decided by
// shared filler words rather than by the cluster keyword. Call sets of
// different clusters are disjoint.
struct ParaphraseCorpusSpec {
  std::size_t clusters = 40;
  std::size_t cases_per_cluster = 6;
  std::size_t test_cases_per_cluster = 2;
  std::size_t calls_per_cluster = 3;
  std::size_t filler_vocabulary = 12;
  std::size_t filler_words = 5;
  std::uint64_t seed = 0;
};

SyntheticCorpus generate_paraphrase_corpus(const ParaphraseCorpusSpec& spec);

std::vector<Case> cases_of(std::span<const CorpusCase> cases);
CaseBank bank_of(std::span<const CorpusCase> cases);
void write_cases(const std::filesystem::path& path, std::span<const Case> cases);
std::vector<Case> read_cases(const std::filesystem::path& path);

inline constexpr int kReportSchemaVersion = 1;

struct SampleResult {
  std::string case_id;
  std::vector<std::string> retrieved_ids;
  std::optional<ScriptScore> score;  // empty when the backend failed
  bool repetitive = false;
  std::string error;
};

struct EvaluationReport {
  std::string split;
  std::string generator_id;
  std::size_t m = 0;
  std::vector<SampleResult> samples;
  ScriptScore aggregates;
  bool aggregates_defined = false;  // false when no sample was scored
  double repetitive_generation_rate = 0.0;
  std::size_t failures = 0;
};

nlohmann::json to_json(const EvaluationReport& report);

struct EvaluationOptions {
  std::size_t m = 3;
  std::string split = "test";
  ReuseOptions reuse;
  std::size_t threads = 1;  // >1 only for thread-safe, order-independent generators
};

// Retrieve M from `bank`, generate greedily, score against the test case's
// own script. Backend errors are recorded per sample.
EvaluationReport evaluate_offline(const CaseBankView& bank, std::span<const Case> test,
                                  const Retriever& retriever, Generator& generator,
                                  const EvaluationOptions& options = {});

struct OnlinePoint {
  std::size_t step = 0;  // 1-based
  std::string case_id;
  double ff1 = 0.0;
  double cumulative_ff1 = 0.0;
  double windowed_ff1 = 0.0;
  std::uint64_t bank_revision = 0;  // after this request
  bool failed = false;
};

nlohmann::json to_json(const OnlinePoint& point);

struct OnlineOptions {
  std::size_t m = 3;
  bool retain_enabled = true;
  std::size_t window = 50;
  ReuseOptions reuse;
};

// Sequential 4R loop: each request is answered from the current bank, scored
// against its ground-truth script, then (if enabled) that script is retained
// as the revised solution. Failed requests score 0; their ground truth is
// still retained.
std::vector<OnlinePoint> simulate_online(CaseBank& bank, std::span<const Case> stream,
                                         const Retriever& retriever, Generator& generator,
                                         const OnlineOptions& options = {});

// Pointwise cumulative-FF1 difference of `series` over `baseline`.
std::vector<double> improvement_series(std::span<const OnlinePoint> series,
                                       std::span<const OnlinePoint> baseline);

}  // namespace cbr
