#include "cbr/retrieval_finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "cbr/errors.hpp"
#include "cbr/metrics.hpp"
#include "cbr/script_analysis.hpp"

namespace cbr {

using nlohmann::json;

json to_json(const LabeledTriplet& t) {
  return json{{"query_id", t.query_id},
              {"positive_id", t.positive_id},
              {"negative_ids", t.negative_ids},
              {"positive_ff1", t.positive_ff1}};
}

LabeledTriplet triplet_from_json(const json& j) {
  LabeledTriplet t;
  t.query_id = j.at("query_id").get<std::string>();
  t.positive_id = j.at("positive_id").get<std::string>();
  t.negative_ids = j.at("negative_ids").get<std::vector<std::string>>();
  t.positive_ff1 = j.at("positive_ff1").get<double>();
  return t;
}

void write_triplets(const std::filesystem::path& path, std::span<const LabeledTriplet> triplets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageFailure("cannot write '" + path.string() + "'");
  for (const auto& t : triplets) out << to_json(t).dump() << '\n';
  if (!out) throw StorageFailure("write to '" + path.string() + "' failed");
}

std::vector<LabeledTriplet> read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageFailure("cannot open '" + path.string() + "'");
  std::vector<LabeledTriplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(triplet_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- mining

std::vector<LabeledTriplet> mine_labels(const CaseBankView& bank, const Retriever& retriever,
                                        std::size_t k, std::size_t threads) {
  if (bank.size() < 2) throw BankTooSmall("mining needs at least two cases");
  if (k < 1) throw InvalidArgument("k must be >= 1");

  std::unordered_map<std::string, FunctionCallSet> calls;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    calls.emplace(bank[i].id, extract_functions(bank[i].script));
  }

  // Warm the embedding cache serially so workers mostly read.
  for (std::size_t i = 0; i < bank.size(); ++i) (void)retriever.case_vector(bank[i]);

  std::vector<LabeledTriplet> out(bank.size());
  auto mine_one = [&](std::size_t i) {
    const Case& query = bank[i];
    const auto view = bank.leave_one_out(query.id);
    const auto top = retriever.retrieve_top_k(view, query.intent, k);
    const FunctionCallSet& reference = calls.at(query.id);

    std::size_t best = 0;
    double best_ff1 = -1.0;
    for (std::size_t j = 0; j < top.entries.size(); ++j) {
      // Entries arrive similarity-desc then id-asc, so strict '>' keeps the
      // tie-break order.
      const double ff1 = function_f1(calls.at(top.entries[j].case_id), reference);
      if (ff1 > best_ff1) {
        best_ff1 = ff1;
        best = j;
      }
    }
    LabeledTriplet t;
    t.query_id = query.id;
    t.positive_id = top.entries[best].case_id;
    t.positive_ff1 = best_ff1;
    for (std::size_t j = 0; j < top.entries.size(); ++j) {
      if (j != best) t.negative_ids.push_back(top.entries[j].case_id);
    }
    out[i] = std::move(t);
  };

  threads = std::max<std::size_t>(1, std::min(threads, bank.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < bank.size(); ++i) mine_one(i);
    return out;
  }
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < bank.size(); i += threads) mine_one(i);
    });
  }
  workers.clear();
  return out;
}

// ---------------------------------------------------------------- InfoNCE

double info_nce_loss(double positive_similarity, std::span<const double> negative_similarities,
                     double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
  double m = positive_similarity / tau;
  for (double s : negative_similarities) m = std::max(m, s / tau);
  double sum = std::exp(positive_similarity / tau - m);
  for (double s : negative_similarities) sum += std::exp(s / tau - m);
  return m + std::log(sum) - positive_similarity / tau;
}

namespace {

// Accumulates coeff * (d cos(a,b) / d a) into ga and coeff * (d cos / d b)
// into gb, given a, b and their norms.
void cosine_partials(const Vector& a, double na, const Vector& b, double nb, double s,
                     double coeff, Vector& ga, Vector& gb) {
  const double inv = 1.0 / (na * nb);
  const double sa = s / (na * na);
  const double sb = s / (nb * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ga[i] += coeff * (b[i] * inv - sa * a[i]);
    gb[i] += coeff * (a[i] * inv - sb * b[i]);
  }
}

// grad += g x^T
void add_outer(std::vector<double>& grad, const Vector& g, const Vector& x) {
  const std::size_t d = x.size();
  for (std::size_t r = 0; r < d; ++r) {
    if (g[r] == 0.0) continue;
    double* row = &grad[r * d];
    for (std::size_t c = 0; c < d; ++c) row[c] += g[r] * x[c];
  }
}

}  // namespace

LossAndGradient info_nce_batch_loss(const Adapter& adapter,
                                    std::span<const ContrastiveExample* const> batch, double tau,
                                    bool in_batch_negatives) {
  if (batch.empty()) throw InvalidArgument("InfoNCE batch must be nonempty");
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
  const std::size_t d = adapter.dimension();

  LossAndGradient out;
  out.gradient.assign(d * d, 0.0);

  // Adapted positives are shared across queries when in-batch negatives are on.
  std::vector<Vector> adapted_positive(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    adapted_positive[i] = adapter.apply(batch[i]->positive);
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ContrastiveExample& ex = *batch[i];

    // Candidate list: positive first, then mined negatives, then in-batch.
    std::vector<const Vector*> base{&ex.positive};
    std::vector<Vector> adapted{adapted_positive[i]};
    for (const auto& n : ex.negatives) {
      base.push_back(&n);
      adapted.push_back(adapter.apply(n));
    }
    if (in_batch_negatives) {
      std::vector<std::string_view> seen(ex.negative_keys.begin(), ex.negative_keys.end());
      seen.push_back(ex.positive_key);
      seen.push_back(ex.query_key);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i) continue;
        const std::string& key = batch[j]->positive_key;
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        base.push_back(&batch[j]->positive);
        adapted.push_back(adapted_positive[j]);
      }
    }

    const Vector a = adapter.apply(ex.query);
    const double na = norm(a);
    if (na == 0.0) throw ZeroVector("adapted query embedding is zero");
    std::vector<double> sims(adapted.size());
    std::vector<double> norms(adapted.size());
    for (std::size_t j = 0; j < adapted.size(); ++j) {
      norms[j] = norm(adapted[j]);
      if (norms[j] == 0.0) throw ZeroVector("adapted candidate embedding is zero");
      sims[j] = dot(a, adapted[j]) / (na * norms[j]);
    }

    double m = sims[0] / tau;
    for (double s : sims) m = std::max(m, s / tau);
    double sum = 0.0;
    for (double s : sims) sum += std::exp(s / tau - m);
    out.loss += m + std::log(sum) - sims[0] / tau;

    Vector ga(d, 0.0);
    for (std::size_t j = 0; j < adapted.size(); ++j) {
      const double softmax = std::exp(sims[j] / tau - m) / sum;
      const double coeff = (softmax - (j == 0 ? 1.0 : 0.0)) / tau;
      Vector gb(d, 0.0);
      cosine_partials(a, na, adapted[j], norms[j], sims[j], coeff, ga, gb);
      add_outer(out.gradient, gb, *base[j]);
    }
    add_outer(out.gradient, ga, ex.query);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_n;
  for (double& g : out.gradient) g *= inv_n;
  return out;
}

// ---------------------------------------------------------------- training

BaseEmbeddingLookup make_base_embedding_lookup(const CaseBankView& view,
                                               EmbeddingService& embeddings) {
  return [view, &embeddings](const std::string& id) -> Vector {
    const Case* c = view.find(id);
    if (c == nullptr) throw MissingEmbedding("no case with id '" + id + "'");
    if (c->embedding) return *c->embedding;
    return embeddings.raw(c->intent);
  };
}

std::vector<ContrastiveExample> build_examples(std::span<const LabeledTriplet> triplets,
                                               const BaseEmbeddingLookup& lookup) {
  std::unordered_map<std::string, Vector> memo;
  auto get = [&](const std::string& id) -> const Vector& {
    auto it = memo.find(id);
    if (it == memo.end()) it = memo.emplace(id, lookup(id)).first;
    return it->second;
  };
  std::vector<ContrastiveExample> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    ContrastiveExample ex;
    ex.query_key = t.query_id;
    ex.query = get(t.query_id);
    ex.positive_key = t.positive_id;
    ex.positive = get(t.positive_id);
    ex.negative_keys = t.negative_ids;
    for (const auto& n : t.negative_ids) ex.negatives.push_back(get(n));
    out.push_back(std::move(ex));
  }
  return out;
}

AdapterTrainingResult train_adapter(std::span<const LabeledTriplet> triplets,
                                    const BaseEmbeddingLookup& lookup, std::size_t dimension,
                                    const AdapterTrainingConfig& config) {
  if (triplets.empty()) throw InvalidArgument("no triplets to train on");
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(config.tau > 0.0)) throw InvalidArgument("temperature must be positive");

  AdapterTrainingResult result{Adapter(dimension), {}};
  if (config.epochs == 0) return result;

  const auto examples = build_examples(triplets, lookup);
  for (const auto& ex : examples) {
    if (ex.query.size() != dimension || ex.positive.size() != dimension) {
      throw DimensionMismatch("training embedding dimension does not match adapter");
    }
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::vector<const ContrastiveExample*> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&examples[order[i]]);

      const auto lg =
          info_nce_batch_loss(result.adapter, batch, config.tau, config.in_batch_negatives);
      if (!std::isfinite(lg.loss)) {
        throw NonFiniteLoss("InfoNCE loss became non-finite at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(result.loss_curve.size()));
      }
      result.loss_curve.push_back(lg.loss);
      auto params = result.adapter.data();
      for (std::size_t p = 0; p < params.size(); ++p) {
        params[p] -= config.learning_rate * lg.gradient[p];
      }
      ++result.adapter.trained_steps;
    }
  }
  return result;
}

}  // namespace cbr
