#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cbr/case_bank.hpp"
#include "cbr/retrieval.hpp"
#include "cbr/script_analysis.hpp"

namespace cbr {

inline constexpr std::string_view kEndToken = "<end>";

using TokenSequence = std::vector<std::size_t>;

// Position-wise categorical policy over a function vocabulary plus an end
// token. Position t draws from softmax(logits[t]); sampling stops at the end
// token or after max_length tokens. There is no recurrence, so every
// sequence probability and expectation is exactly enumerable.
class ToyPolicy {
 public:
  ToyPolicy(std::vector<std::string> functions, std::size_t max_length);

  std::size_t vocab_size() const noexcept { return vocabulary_.size(); }
  std::size_t end_token() const noexcept { return vocabulary_.size() - 1; }
  std::size_t max_length() const noexcept { return max_length_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  std::size_t parameter_count() const noexcept { return logits_.size(); }

  double& logit(std::size_t position, std::size_t token) {
    return logits_[position * vocab_size() + token];
  }
  double logit(std::size_t position, std::size_t token) const {
    return logits_[position * vocab_size() + token];
  }
  std::span<double> logits() noexcept { return logits_; }
  std::span<const double> logits() const noexcept { return logits_; }

  std::vector<double> probabilities(std::size_t position) const;
  std::vector<double> log_probabilities(std::size_t position) const;

  // Per-token log-probabilities of a sequence; throws InvalidArgument when the
  // sequence is not one this policy can emit.
  std::vector<double> token_log_probs(std::span<const std::size_t> sequence) const;
  double log_prob(std::span<const std::size_t> sequence) const;

  // d log π(sequence) / d logits, flattened like logits().
  std::vector<double> log_prob_gradient(std::span<const std::size_t> sequence) const;
  // Gradient of log π(token_t) at one position only, accumulated with weight.
  void accumulate_token_gradient(std::size_t position, std::size_t token, double weight,
                                 std::span<double> gradient) const;

  TokenSequence sample(std::mt19937_64& rng) const;
  TokenSequence greedy() const;

  // Called functions (end token excluded), duplicates collapsed.
  FunctionCallSet calls(std::span<const std::size_t> sequence) const;
  std::string render(std::span<const std::size_t> sequence) const;

  bool same_shape(const ToyPolicy& other) const;
  void validate(std::span<const std::size_t> sequence) const;

  // Number of distinct emit-able sequences.
  std::size_t sequence_space_size() const;

  nlohmann::json to_json() const;

 private:
  std::vector<std::string> vocabulary_;
  std::size_t max_length_;
  std::vector<double> logits_;
};

struct WeightedSequence {
  TokenSequence tokens;
  double probability = 0.0;
};

// Every emit-able sequence with its probability. Throws InvalidArgument above
// `limit` sequences.
std::vector<WeightedSequence> enumerate_sequences(const ToyPolicy& policy,
                                                  std::size_t limit = 10000);

// Exact sequence-level KL(p || q).
double exact_kl(const ToyPolicy& p, const ToyPolicy& q);

struct RewardSpec {
  FunctionCallSet reference_calls;
  double beta = 0.1;
  ToyPolicy reference_policy;
};

inline constexpr double kDefaultKlBeta = 0.1;

// FF1(calls, reference) − β·(log π_θ(y) − log π_ref(y)).
double reward(const FunctionCallSet& sequence_calls, const RewardSpec& spec,
              double logprob_current, double logprob_reference);

struct Rollout {
  TokenSequence tokens;
  double ff1 = 0.0;
  double reward = 0.0;  // ff1 minus the β-scaled per-sample KL estimate
  double logprob_sampling = 0.0;
  double logprob_reference = 0.0;
  std::vector<double> token_logprob_sampling;   // π_old per token
  std::vector<double> token_logprob_reference;  // π_ref per token
};

// Scores `tokens` under the sampling policy and the reference policy.
Rollout make_rollout(const ToyPolicy& sampling_policy, const RewardSpec& spec,
                     TokenSequence tokens);

struct RolloutBatch {
  std::vector<Rollout> samples;
};

enum class RlAlgorithm { reinforce, online_dpo, remax, rloo, grpo };

std::string_view to_string(RlAlgorithm algorithm);
RlAlgorithm rl_algorithm_from_string(std::string_view text);

// Samples drawn per query: 1 for REINFORCE, 2 for Online DPO and Remax (the
// second Remax sample is the greedy rollout), 4 for RLOO and GRPO.
std::size_t default_group_size(RlAlgorithm algorithm);

struct PolicyLoss {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d logits
  std::vector<double> advantages;
  bool skipped = false;     // Online DPO tie: no preference pair
  bool degenerate = false;  // GRPO group with zero reward spread
};

struct VariantConfig {
  double beta = kDefaultKlBeta;  // DPO margin scale and GRPO KL weight
  double clip_epsilon = 0.2;
};

// Rollout constants (rewards, sampling/reference log-probs) are frozen; only
// `policy` varies, which keeps every loss finite-difference checkable.
PolicyLoss reinforce_loss(const ToyPolicy& policy, const RolloutBatch& batch);
// Preference is decided by FF1; equal FF1 skips the pair with zero gradient.
PolicyLoss online_dpo_loss(const ToyPolicy& policy, const RolloutBatch& batch, double beta);
PolicyLoss remax_loss(const ToyPolicy& policy, const RolloutBatch& batch);
PolicyLoss rloo_loss(const ToyPolicy& policy, const RolloutBatch& batch);
// Group-standardized FF1 advantages, per-token clipped ratio against the
// sampling policy, and a per-token KL penalty (k3 estimator) to the reference.
PolicyLoss grpo_loss(const ToyPolicy& policy, const RolloutBatch& batch,
                     const VariantConfig& config);

PolicyLoss variant_loss(RlAlgorithm algorithm, const ToyPolicy& policy, const RolloutBatch& batch,
                        const VariantConfig& config);

// r_i − mean_{j≠i} r_j. Needs at least two rewards.
std::vector<double> rloo_advantages(std::span<const double> rewards);
// (r_i − mean) / std with the population std; all zeros when std is 0.
std::vector<double> grpo_advantages(std::span<const double> rewards, bool* degenerate = nullptr);

// One RLFT problem: the functions visible in the retrieved cases form the
// vocabulary; the reference set may contain functions outside it.
struct ToyTask {
  std::vector<std::string> retrieved_pool;
  FunctionCallSet reference;
};

struct ToyTrainingConfig {
  RlAlgorithm algorithm = RlAlgorithm::reinforce;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 0.1;
  double beta = kDefaultKlBeta;
  double clip_epsilon = 0.2;
  std::size_t max_length = 2;
  std::size_t group_size = 0;  // 0: default for the algorithm
  // Starting (and KL reference) policies, one per task; uniform when empty.
  std::vector<ToyPolicy> initial_policies;
  std::size_t monte_carlo_samples = 4000;
};

struct ToyTrainingPoint {
  std::size_t step = 0;
  double expected_reward = 0.0;  // E[FF1] averaged over tasks
  double grad_norm = 0.0;
  double kl = 0.0;  // KL(π_θ || π_ref) averaged over tasks
  bool exact = true;
};

struct ToyTrainingResult {
  std::vector<ToyTrainingPoint> curve;
  std::vector<ToyPolicy> policies;
  std::size_t skipped_updates = 0;
  std::size_t degenerate_groups = 0;
};

nlohmann::json to_json(const ToyTrainingPoint& point);

// Expected FF1 of a policy on a task: exact by enumeration when the sequence
// space has at most 10^4 members, Monte Carlo otherwise.
double expected_ff1(const ToyPolicy& policy, const FunctionCallSet& reference,
                    bool* exact = nullptr, std::size_t monte_carlo_samples = 4000,
                    std::uint64_t seed = 0);

ToyPolicy uniform_policy_for(const ToyTask& task, std::size_t max_length);

// Sample -> reward -> update loop with plain gradient descent on the logits.
// Throws NonFiniteLoss.
ToyTrainingResult train_toy(std::span<const ToyTask> tasks, const ToyTrainingConfig& config);

// Supervised-finetuning records: for every case, its leave-one-out top-M
// prompt paired with its own script. Throws BankTooSmall.
struct SftRecord {
  std::string prompt;
  std::string completion;
  std::string query_id;
  std::vector<std::string> retrieved_ids;
};

nlohmann::json to_json(const SftRecord& r);

std::vector<SftRecord> build_sft_dataset(const CaseBankView& bank, const Retriever& retriever,
                                         std::size_t m);
void export_sft_dataset(const CaseBankView& bank, const Retriever& retriever, std::size_t m,
                        const std::filesystem::path& out);

}  // namespace cbr
