#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/case_bank.hpp"
#include "cbr/retrieval.hpp"

namespace cbr {

// Pseudo-label for one query: the FF1-best case among its semantic top-k, and
// the remaining top-k cases as hard negatives.
struct LabeledTriplet {
  std::string query_id;
  std::string positive_id;
  std::vector<std::string> negative_ids;  // retrieval order
  double positive_ff1 = 0.0;

  friend bool operator==(const LabeledTriplet&, const LabeledTriplet&) = default;
};

nlohmann::json to_json(const LabeledTriplet& t);
LabeledTriplet triplet_from_json(const nlohmann::json& j);
void write_triplets(const std::filesystem::path& path, std::span<const LabeledTriplet> triplets);
std::vector<LabeledTriplet> read_triplets(const std::filesystem::path& path);

inline constexpr std::size_t kDefaultMiningK = 10;

// For every case: retrieve top-k from the leave-one-out view, rerank by
// FF1(candidate script, held-out script), label the best as positive. Ties
// prefer higher semantic similarity, then ascending id. Throws BankTooSmall
// for fewer than two cases.
std::vector<LabeledTriplet> mine_labels(const CaseBankView& bank, const Retriever& retriever,
                                        std::size_t k = kDefaultMiningK,
                                        std::size_t threads = 1);

// -log( e^{s+/τ} / (e^{s+/τ} + Σ e^{s-/τ}) ) on precomputed similarities.
double info_nce_loss(double positive_similarity, std::span<const double> negative_similarities,
                     double tau);

// Base (unadapted) vectors for one mined triplet. Keys are case ids and are
// used to deduplicate in-batch negatives.
struct ContrastiveExample {
  std::string query_key;
  Vector query;
  std::string positive_key;
  Vector positive;
  std::vector<std::string> negative_keys;
  std::vector<Vector> negatives;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // row-major, same layout as Adapter::data()
};

// Mean InfoNCE over the batch with similarities cos(A x, A y), and its exact
// gradient with respect to A. With in-batch negatives, each query also
// contrasts against the other queries' positives (skipping its own positive,
// itself and ids already among its negatives).
LossAndGradient info_nce_batch_loss(const Adapter& adapter,
                                    std::span<const ContrastiveExample* const> batch, double tau,
                                    bool in_batch_negatives);

struct AdapterTrainingConfig {
  double tau = 1.0;
  double learning_rate = 2.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  bool in_batch_negatives = true;
};

struct AdapterTrainingResult {
  Adapter adapter;
  std::vector<double> loss_curve;  // one entry per minibatch step
};

using BaseEmbeddingLookup = std::function<Vector(const std::string& case_id)>;

// Case id -> stored base embedding, else the embedded intent. Throws
// MissingEmbedding for ids not in the view.
BaseEmbeddingLookup make_base_embedding_lookup(const CaseBankView& view,
                                               EmbeddingService& embeddings);

std::vector<ContrastiveExample> build_examples(std::span<const LabeledTriplet> triplets,
                                               const BaseEmbeddingLookup& lookup);

// Minibatch gradient descent on the batch InfoNCE loss, starting from the
// identity. Deterministic for a fixed seed. Throws NonFiniteLoss.
AdapterTrainingResult train_adapter(std::span<const LabeledTriplet> triplets,
                                    const BaseEmbeddingLookup& lookup, std::size_t dimension,
                                    const AdapterTrainingConfig& config);

}  // namespace cbr
