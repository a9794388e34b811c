#include "cbr/rlft.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "cbr/errors.hpp"
#include "cbr/metrics.hpp"
#include "cbr/reuse.hpp"

namespace cbr {

using nlohmann::json;

// ---------------------------------------------------------------- policy

ToyPolicy::ToyPolicy(std::vector<std::string> functions, std::size_t max_length)
    : vocabulary_(std::move(functions)), max_length_(max_length) {
  if (max_length_ < 1) throw InvalidArgument("max_length must be >= 1");
  std::unordered_set<std::string> seen;
  for (const auto& f : vocabulary_) {
    if (!FunctionCallSet::is_valid_name(f)) throw InvalidArgument("invalid function name '" + f + "'");
    if (!seen.insert(f).second) throw InvalidArgument("duplicate function '" + f + "'");
  }
  vocabulary_.emplace_back(kEndToken);
  logits_.assign(max_length_ * vocabulary_.size(), 0.0);
}

std::vector<double> ToyPolicy::probabilities(std::size_t position) const {
  const std::size_t v = vocab_size();
  const double* row = &logits_[position * v];
  const double m = *std::max_element(row, row + v);
  std::vector<double> p(v);
  double z = 0.0;
  for (std::size_t i = 0; i < v; ++i) z += (p[i] = std::exp(row[i] - m));
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> ToyPolicy::log_probabilities(std::size_t position) const {
  const std::size_t v = vocab_size();
  const double* row = &logits_[position * v];
  const double m = *std::max_element(row, row + v);
  double z = 0.0;
  for (std::size_t i = 0; i < v; ++i) z += std::exp(row[i] - m);
  const double log_z = m + std::log(z);
  std::vector<double> lp(v);
  for (std::size_t i = 0; i < v; ++i) lp[i] = row[i] - log_z;
  return lp;
}

void ToyPolicy::validate(std::span<const std::size_t> sequence) const {
  if (sequence.empty() || sequence.size() > max_length_) {
    throw InvalidArgument("sequence length " + std::to_string(sequence.size()) +
                          " outside [1, max_length]");
  }
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    if (sequence[t] >= vocab_size()) throw InvalidArgument("token index out of range");
    if (sequence[t] == end_token() && t + 1 != sequence.size()) {
      throw InvalidArgument("end token before the end of the sequence");
    }
  }
  if (sequence.size() < max_length_ && sequence.back() != end_token()) {
    throw InvalidArgument("short sequence must terminate with the end token");
  }
}

std::vector<double> ToyPolicy::token_log_probs(std::span<const std::size_t> sequence) const {
  validate(sequence);
  std::vector<double> out(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) out[t] = log_probabilities(t)[sequence[t]];
  return out;
}

double ToyPolicy::log_prob(std::span<const std::size_t> sequence) const {
  const auto lp = token_log_probs(sequence);
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

void ToyPolicy::accumulate_token_gradient(std::size_t position, std::size_t token, double weight,
                                          std::span<double> gradient) const {
  const auto p = probabilities(position);
  double* row = &gradient[position * vocab_size()];
  for (std::size_t v = 0; v < p.size(); ++v) {
    row[v] += weight * ((v == token ? 1.0 : 0.0) - p[v]);
  }
}

std::vector<double> ToyPolicy::log_prob_gradient(std::span<const std::size_t> sequence) const {
  validate(sequence);
  std::vector<double> g(logits_.size(), 0.0);
  for (std::size_t t = 0; t < sequence.size(); ++t) accumulate_token_gradient(t, sequence[t], 1.0, g);
  return g;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

TokenSequence ToyPolicy::sample(std::mt19937_64& rng) const {
  TokenSequence seq;
  for (std::size_t t = 0; t < max_length_; ++t) {
    const auto p = probabilities(t);
    const double u = unit_uniform(rng);
    double cumulative = 0.0;
    std::size_t token = p.size() - 1;
    for (std::size_t v = 0; v < p.size(); ++v) {
      cumulative += p[v];
      if (u < cumulative) {
        token = v;
        break;
      }
    }
    seq.push_back(token);
    if (token == end_token()) break;
  }
  return seq;
}

TokenSequence ToyPolicy::greedy() const {
  TokenSequence seq;
  const std::size_t v = vocab_size();
  for (std::size_t t = 0; t < max_length_; ++t) {
    const double* row = &logits_[t * v];
    const auto token = static_cast<std::size_t>(std::max_element(row, row + v) - row);
    seq.push_back(token);
    if (token == end_token()) break;
  }
  return seq;
}

FunctionCallSet ToyPolicy::calls(std::span<const std::size_t> sequence) const {
  FunctionCallSet out;
  for (auto token : sequence) {
    if (token < end_token()) out.insert(vocabulary_[token]);
  }
  return out;
}

std::string ToyPolicy::render(std::span<const std::size_t> sequence) const {
  std::string out;
  for (auto token : sequence) {
    if (token >= end_token()) break;
    out += vocabulary_[token] + "()\n";
  }
  return out;
}

bool ToyPolicy::same_shape(const ToyPolicy& other) const {
  return vocabulary_ == other.vocabulary_ && max_length_ == other.max_length_;
}

std::size_t ToyPolicy::sequence_space_size() const {
  constexpr std::size_t kCap = static_cast<std::size_t>(1) << 62;
  const std::size_t f = vocab_size() - 1;
  std::size_t total = 0;
  std::size_t power = 1;  // f^t
  for (std::size_t t = 0; t < max_length_; ++t) {
    total = std::min(kCap, total + power);  // end token at position t
    power = f == 0 ? 0 : std::min(kCap, power > kCap / std::max<std::size_t>(f, 1) ? kCap : power * f);
  }
  return std::min(kCap, total + power);  // full-length sequences without an end token
}

json ToyPolicy::to_json() const {
  json rows = json::array();
  for (std::size_t t = 0; t < max_length_; ++t) rows.push_back(probabilities(t));
  return json{{"vocabulary", vocabulary_}, {"max_length", max_length_}, {"probabilities", rows}};
}

std::vector<WeightedSequence> enumerate_sequences(const ToyPolicy& policy, std::size_t limit) {
  if (policy.sequence_space_size() > limit) {
    throw InvalidArgument("sequence space of " + std::to_string(policy.sequence_space_size()) +
                          " exceeds enumeration limit");
  }
  std::vector<std::vector<double>> probs(policy.max_length());
  for (std::size_t t = 0; t < policy.max_length(); ++t) probs[t] = policy.probabilities(t);

  std::vector<WeightedSequence> out;
  TokenSequence prefix;
  auto recurse = [&](auto& self, double p) -> void {
    const std::size_t t = prefix.size();
    if (t == policy.max_length()) {
      out.push_back({prefix, p});
      return;
    }
    for (std::size_t v = 0; v < policy.vocab_size(); ++v) {
      prefix.push_back(v);
      if (v == policy.end_token()) {
        out.push_back({prefix, p * probs[t][v]});
      } else {
        self(self, p * probs[t][v]);
      }
      prefix.pop_back();
    }
  };
  recurse(recurse, 1.0);
  return out;
}

double exact_kl(const ToyPolicy& p, const ToyPolicy& q) {
  if (!p.same_shape(q)) throw InvalidArgument("KL between policies of different shapes");
  double kl = 0.0;
  for (const auto& s : enumerate_sequences(p)) {
    if (s.probability == 0.0) continue;
    kl += s.probability * (p.log_prob(s.tokens) - q.log_prob(s.tokens));
  }
  return kl;
}

// ---------------------------------------------------------------- rewards

double reward(const FunctionCallSet& sequence_calls, const RewardSpec& spec,
              double logprob_current, double logprob_reference) {
  return function_f1(sequence_calls, spec.reference_calls) -
         spec.beta * (logprob_current - logprob_reference);
}

Rollout make_rollout(const ToyPolicy& sampling_policy, const RewardSpec& spec,
                     TokenSequence tokens) {
  if (!sampling_policy.same_shape(spec.reference_policy)) {
    throw InvalidArgument("reference policy shape differs from the sampling policy");
  }
  Rollout r;
  r.token_logprob_sampling = sampling_policy.token_log_probs(tokens);
  r.token_logprob_reference = spec.reference_policy.token_log_probs(tokens);
  r.logprob_sampling =
      std::accumulate(r.token_logprob_sampling.begin(), r.token_logprob_sampling.end(), 0.0);
  r.logprob_reference =
      std::accumulate(r.token_logprob_reference.begin(), r.token_logprob_reference.end(), 0.0);
  const FunctionCallSet calls = sampling_policy.calls(tokens);
  r.ff1 = function_f1(calls, spec.reference_calls);
  r.reward = reward(calls, spec, r.logprob_sampling, r.logprob_reference);
  r.tokens = std::move(tokens);
  return r;
}

// ---------------------------------------------------------------- losses

std::string_view to_string(RlAlgorithm algorithm) {
  switch (algorithm) {
    case RlAlgorithm::reinforce:
      return "reinforce";
    case RlAlgorithm::online_dpo:
      return "online_dpo";
    case RlAlgorithm::remax:
      return "remax";
    case RlAlgorithm::rloo:
      return "rloo";
    case RlAlgorithm::grpo:
      return "grpo";
  }
  return "reinforce";
}

RlAlgorithm rl_algorithm_from_string(std::string_view text) {
  for (auto a : {RlAlgorithm::reinforce, RlAlgorithm::online_dpo, RlAlgorithm::remax,
                 RlAlgorithm::rloo, RlAlgorithm::grpo}) {
    if (to_string(a) == text) return a;
  }
  throw InvalidArgument("unknown algorithm '" + std::string(text) + "'");
}

std::size_t default_group_size(RlAlgorithm algorithm) {
  switch (algorithm) {
    case RlAlgorithm::reinforce:
      return 1;
    case RlAlgorithm::online_dpo:
    case RlAlgorithm::remax:
      return 2;
    case RlAlgorithm::rloo:
    case RlAlgorithm::grpo:
      return 4;
  }
  return 1;
}

namespace {

void require_samples(const RolloutBatch& batch, std::size_t n, std::string_view who) {
  if (batch.samples.size() != n) {
    throw InvalidArgument(std::string(who) + " needs exactly " + std::to_string(n) +
                          " samples, got " + std::to_string(batch.samples.size()));
  }
}

// loss += -w * log π(seq), gradient accordingly.
void add_weighted_logprob(const ToyPolicy& policy, const TokenSequence& seq, double weight,
                          PolicyLoss& out) {
  if (weight == 0.0) return;
  out.loss -= weight * policy.log_prob(seq);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    policy.accumulate_token_gradient(t, seq[t], -weight, out.gradient);
  }
}

PolicyLoss empty_loss(const ToyPolicy& policy) {
  PolicyLoss out;
  out.gradient.assign(policy.parameter_count(), 0.0);
  return out;
}

}  // namespace

PolicyLoss reinforce_loss(const ToyPolicy& policy, const RolloutBatch& batch) {
  require_samples(batch, 1, "REINFORCE");
  PolicyLoss out = empty_loss(policy);
  const Rollout& r = batch.samples.front();
  out.advantages = {r.reward};
  add_weighted_logprob(policy, r.tokens, r.reward, out);
  return out;
}

PolicyLoss online_dpo_loss(const ToyPolicy& policy, const RolloutBatch& batch, double beta) {
  require_samples(batch, 2, "Online DPO");
  PolicyLoss out = empty_loss(policy);
  const Rollout* a = &batch.samples[0];
  const Rollout* b = &batch.samples[1];
  if (a->ff1 == b->ff1) {
    out.skipped = true;
    return out;
  }
  if (b->ff1 > a->ff1) std::swap(a, b);
  const Rollout& winner = *a;
  const Rollout& loser = *b;

  const double margin = beta * ((policy.log_prob(winner.tokens) - winner.logprob_reference) -
                                (policy.log_prob(loser.tokens) - loser.logprob_reference));
  // -log σ(z) = softplus(-z)
  out.loss = margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  const double sigma_neg = 1.0 / (1.0 + std::exp(margin));  // σ(-z)
  const double coeff = -sigma_neg * beta;
  for (std::size_t t = 0; t < winner.tokens.size(); ++t) {
    policy.accumulate_token_gradient(t, winner.tokens[t], coeff, out.gradient);
  }
  for (std::size_t t = 0; t < loser.tokens.size(); ++t) {
    policy.accumulate_token_gradient(t, loser.tokens[t], -coeff, out.gradient);
  }
  return out;
}

PolicyLoss remax_loss(const ToyPolicy& policy, const RolloutBatch& batch) {
  require_samples(batch, 2, "Remax");
  PolicyLoss out = empty_loss(policy);
  const Rollout& sampled = batch.samples[0];
  const Rollout& greedy = batch.samples[1];
  const double advantage = sampled.reward - greedy.reward;
  out.advantages = {advantage};
  add_weighted_logprob(policy, sampled.tokens, advantage, out);
  return out;
}

std::vector<double> rloo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw InvalidArgument("RLOO needs at least two samples");
  const double total = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  const double k_minus_1 = static_cast<double>(rewards.size() - 1);
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = rewards[i] - (total - rewards[i]) / k_minus_1;
  }
  return adv;
}

PolicyLoss rloo_loss(const ToyPolicy& policy, const RolloutBatch& batch) {
  PolicyLoss out = empty_loss(policy);
  std::vector<double> rewards;
  for (const auto& s : batch.samples) rewards.push_back(s.reward);
  out.advantages = rloo_advantages(rewards);
  const double inv_k = 1.0 / static_cast<double>(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    add_weighted_logprob(policy, batch.samples[i].tokens, inv_k * out.advantages[i], out);
  }
  return out;
}

std::vector<double> grpo_advantages(std::span<const double> rewards, bool* degenerate) {
  if (rewards.empty()) throw InvalidArgument("GRPO needs at least one sample");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  const bool flat = sd == 0.0;
  if (degenerate != nullptr) *degenerate = flat;
  if (!flat) {
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  }
  return adv;
}

PolicyLoss grpo_loss(const ToyPolicy& policy, const RolloutBatch& batch,
                     const VariantConfig& config) {
  PolicyLoss out = empty_loss(policy);
  std::vector<double> ff1;
  for (const auto& s : batch.samples) ff1.push_back(s.ff1);
  out.advantages = grpo_advantages(ff1, &out.degenerate);

  const double eps = config.clip_epsilon;
  const double inv_k = 1.0 / static_cast<double>(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const Rollout& s = batch.samples[i];
    const double adv = out.advantages[i];
    const auto current = policy.token_log_probs(s.tokens);
    const double inv_t = 1.0 / static_cast<double>(s.tokens.size());
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const double ratio = std::exp(current[t] - s.token_logprob_sampling[t]);
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
      const double unclipped_term = ratio * adv;
      const double clipped_term = clipped * adv;
      const double surrogate = std::min(unclipped_term, clipped_term);
      // d surrogate / d log π: the clipped branch is constant in θ.
      const bool unclipped_active = unclipped_term <= clipped_term || ratio == clipped;
      const double d_surrogate = unclipped_active ? unclipped_term : 0.0;

      const double log_ref_ratio = s.token_logprob_reference[t] - current[t];
      const double kl = std::exp(log_ref_ratio) - log_ref_ratio - 1.0;
      const double d_kl = 1.0 - std::exp(log_ref_ratio);

      out.loss -= inv_k * inv_t * (surrogate - config.beta * kl);
      policy.accumulate_token_gradient(t, s.tokens[t],
                                       -inv_k * inv_t * (d_surrogate - config.beta * d_kl),
                                       out.gradient);
    }
  }
  return out;
}

PolicyLoss variant_loss(RlAlgorithm algorithm, const ToyPolicy& policy, const RolloutBatch& batch,
                        const VariantConfig& config) {
  switch (algorithm) {
    case RlAlgorithm::reinforce:
      return reinforce_loss(policy, batch);
    case RlAlgorithm::online_dpo:
      return online_dpo_loss(policy, batch, config.beta);
    case RlAlgorithm::remax:
      return remax_loss(policy, batch);
    case RlAlgorithm::rloo:
      return rloo_loss(policy, batch);
    case RlAlgorithm::grpo:
      return grpo_loss(policy, batch, config);
  }
  throw InvalidArgument("unknown algorithm");
}

// ---------------------------------------------------------------- training

json to_json(const ToyTrainingPoint& point) {
  return json{{"step", point.step},
              {"expected_reward", point.expected_reward},
              {"grad_norm", point.grad_norm},
              {"kl", point.kl}};
}

double expected_ff1(const ToyPolicy& policy, const FunctionCallSet& reference, bool* exact,
                    std::size_t monte_carlo_samples, std::uint64_t seed) {
  constexpr std::size_t kEnumerationLimit = 10000;
  if (policy.sequence_space_size() <= kEnumerationLimit) {
    if (exact != nullptr) *exact = true;
    double e = 0.0;
    for (const auto& s : enumerate_sequences(policy, kEnumerationLimit)) {
      e += s.probability * function_f1(policy.calls(s.tokens), reference);
    }
    return e;
  }
  if (exact != nullptr) *exact = false;
  if (monte_carlo_samples == 0) throw InvalidArgument("monte_carlo_samples must be positive");
  std::mt19937_64 rng(seed);
  double e = 0.0;
  for (std::size_t i = 0; i < monte_carlo_samples; ++i) {
    e += function_f1(policy.calls(policy.sample(rng)), reference);
  }
  return e / static_cast<double>(monte_carlo_samples);
}

namespace {

double estimated_kl(const ToyPolicy& p, const ToyPolicy& q, std::size_t samples,
                    std::uint64_t seed) {
  if (p.sequence_space_size() <= 10000) return exact_kl(p, q);
  std::mt19937_64 rng(seed);
  double kl = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto s = p.sample(rng);
    kl += p.log_prob(s) - q.log_prob(s);
  }
  return kl / static_cast<double>(samples);
}

}  // namespace

ToyPolicy uniform_policy_for(const ToyTask& task, std::size_t max_length) {
  return ToyPolicy(task.retrieved_pool, max_length);
}

ToyTrainingResult train_toy(std::span<const ToyTask> tasks, const ToyTrainingConfig& config) {
  if (tasks.empty()) throw InvalidArgument("train_toy needs at least one task");
  if (!config.initial_policies.empty() && config.initial_policies.size() != tasks.size()) {
    throw InvalidArgument("initial_policies must match the number of tasks");
  }
  if (config.beta < 0.0) throw InvalidArgument("beta must be >= 0");

  const std::size_t group =
      config.group_size != 0 ? config.group_size : default_group_size(config.algorithm);
  if (config.algorithm == RlAlgorithm::reinforce && group != 1) {
    throw InvalidArgument("REINFORCE uses exactly one sample per query");
  }
  if ((config.algorithm == RlAlgorithm::online_dpo || config.algorithm == RlAlgorithm::remax) &&
      group != 2) {
    throw InvalidArgument("Online DPO and Remax use exactly two samples per query");
  }

  ToyTrainingResult result;
  std::vector<RewardSpec> specs;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    ToyPolicy init = config.initial_policies.empty()
                         ? uniform_policy_for(tasks[i], config.max_length)
                         : config.initial_policies[i];
    specs.push_back(RewardSpec{tasks[i].reference, config.beta, init});
    result.policies.push_back(std::move(init));
  }

  const VariantConfig variant{config.beta, config.clip_epsilon};
  std::mt19937_64 rng(config.seed);

  for (std::size_t step = 0; step < config.steps; ++step) {
    double grad_sq = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      ToyPolicy& policy = result.policies[i];
      RolloutBatch batch;
      const std::size_t sampled = config.algorithm == RlAlgorithm::remax ? 1 : group;
      for (std::size_t k = 0; k < sampled; ++k) {
        batch.samples.push_back(make_rollout(policy, specs[i], policy.sample(rng)));
      }
      if (config.algorithm == RlAlgorithm::remax) {
        batch.samples.push_back(make_rollout(policy, specs[i], policy.greedy()));
      }

      const PolicyLoss loss = variant_loss(config.algorithm, policy, batch, variant);
      if (!std::isfinite(loss.loss)) {
        throw NonFiniteLoss("non-finite " + std::string(to_string(config.algorithm)) +
                            " loss at step " + std::to_string(step));
      }
      result.skipped_updates += loss.skipped ? 1 : 0;
      result.degenerate_groups += loss.degenerate ? 1 : 0;
      auto logits = policy.logits();
      for (std::size_t p = 0; p < logits.size(); ++p) {
        if (!std::isfinite(loss.gradient[p])) {
          throw NonFiniteLoss("non-finite gradient at step " + std::to_string(step));
        }
        grad_sq += loss.gradient[p] * loss.gradient[p];
        logits[p] -= config.learning_rate * loss.gradient[p];
      }
    }

    ToyTrainingPoint point;
    point.step = step + 1;
    point.grad_norm = std::sqrt(grad_sq);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      bool exact = true;
      point.expected_reward += expected_ff1(result.policies[i], tasks[i].reference, &exact,
                                            config.monte_carlo_samples, config.seed + step);
      point.exact = point.exact && exact;
      point.kl += estimated_kl(result.policies[i], specs[i].reference_policy,
                               config.monte_carlo_samples, config.seed + step);
    }
    point.expected_reward /= static_cast<double>(tasks.size());
    point.kl /= static_cast<double>(tasks.size());
    result.curve.push_back(point);
  }
  return result;
}

// ---------------------------------------------------------------- SFT export

json to_json(const SftRecord& r) {
  return json{{"prompt", r.prompt},
              {"completion", r.completion},
              {"query_id", r.query_id},
              {"retrieved_ids", r.retrieved_ids}};
}

std::vector<SftRecord> build_sft_dataset(const CaseBankView& bank, const Retriever& retriever,
                                         std::size_t m) {
  if (bank.size() < 2) throw BankTooSmall("SFT export needs at least two cases");
  if (m < 1) throw InvalidArgument("M must be >= 1");
  std::vector<SftRecord> out;
  out.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const Case& c = bank[i];
    const auto view = bank.leave_one_out(c.id);
    const auto top = retriever.retrieve_top_k(view, c.intent, m);
    const auto request = make_request(c.intent, top, view, m);
    SftRecord r;
    r.prompt = assemble_prompt(request);
    r.completion = c.script;
    r.query_id = c.id;
    for (const auto& e : top.entries) r.retrieved_ids.push_back(e.case_id);
    out.push_back(std::move(r));
  }
  return out;
}

void export_sft_dataset(const CaseBankView& bank, const Retriever& retriever, std::size_t m,
                        const std::filesystem::path& out) {
  const auto records = build_sft_dataset(bank, retriever, m);
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw StorageFailure("cannot write '" + out.string() + "'");
  for (const auto& r : records) file << to_json(r).dump() << '\n';
  if (!file) throw StorageFailure("write to '" + out.string() + "' failed");
}

}  // namespace cbr
