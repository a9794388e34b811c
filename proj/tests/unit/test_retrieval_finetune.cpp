#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "cbr/errors.hpp"
#include "cbr/metrics.hpp"
#include "cbr/retrieval_finetune.hpp"
#include "temp_dir.hpp"

using cbr::ContrastiveExample;
using cbr::Vector;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  Vector v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

ContrastiveExample random_example(std::mt19937_64& rng, std::size_t dim, int tag,
                                  std::size_t negatives) {
  ContrastiveExample ex;
  ex.query_key = "q" + std::to_string(tag);
  ex.query = random_vector(rng, dim);
  ex.positive_key = "p" + std::to_string(tag);
  ex.positive = random_vector(rng, dim);
  for (std::size_t j = 0; j < negatives; ++j) {
    ex.negative_keys.push_back("n" + std::to_string(tag) + "_" + std::to_string(j));
    ex.negatives.push_back(random_vector(rng, dim));
  }
  return ex;
}

// Loss over explicit candidate lists, computed from oracle cosines.
double reference_loss(const Vector& q, const Vector& pos, const std::vector<Vector>& negs,
                      double tau) {
  double denom = std::exp(oracle::cosine(q, pos) / tau);
  for (const auto& n : negs) denom += std::exp(oracle::cosine(q, n) / tau);
  return -std::log(std::exp(oracle::cosine(q, pos) / tau) / denom);
}

cbr::CaseBank mining_bank() {
  cbr::CaseBank bank;
  const std::vector<std::string> words = {"ospf", "bgp", "vlan", "reset", "peer", "route"};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i) {
    std::string intent = "check";
    std::string script;
    for (int w = 0; w < 3; ++w) {
      const auto& word = words[rng() % words.size()];
      intent += " " + word;
      script += word + "_api.step_" + std::to_string(rng() % 3) + "()\n";
    }
    bank.retain(intent, script, {std::nullopt, cbr::CaseSource::seed, "c" + std::to_string(100 + i)});
  }
  return bank;
}

}  // namespace

TEST_SUITE("retrieval_finetune") {
  TEST_CASE("InfoNCE closed forms") {
    const Vector one{-1.0};
    CHECK(std::abs(cbr::info_nce_loss(1.0, one, 1.0) - std::log1p(std::exp(-2.0))) < 1e-9);
    const Vector same{0.5};
    CHECK(std::abs(cbr::info_nce_loss(0.5, same, 1.0) - std::log(2.0)) < 1e-9);
    CHECK(cbr::info_nce_loss(0.3, {}, 0.5) == doctest::Approx(0.0));
    // Large logits stay finite.
    const Vector far{-1.0};
    CHECK(std::isfinite(cbr::info_nce_loss(1.0, far, 1e-4)));
    CHECK_THROWS_AS((void)cbr::info_nce_loss(1.0, one, 0.0), cbr::InvalidArgument);
  }

  TEST_CASE("batch loss at identity equals the oracle") {
    std::mt19937_64 rng(11);
    const auto ex = random_example(rng, 5, 0, 3);
    const ContrastiveExample* batch[] = {&ex};
    const auto lg = cbr::info_nce_batch_loss(cbr::Adapter(5), batch, 0.7, true);
    CHECK(std::abs(lg.loss - reference_loss(ex.query, ex.positive, ex.negatives, 0.7)) < 1e-12);
  }

  TEST_CASE("analytic gradient matches finite differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<ContrastiveExample> examples;
      for (int i = 0; i < 3; ++i) examples.push_back(random_example(rng, 4, i, 2));
      std::vector<const ContrastiveExample*> batch;
      for (const auto& e : examples) batch.push_back(&e);

      cbr::Adapter adapter(4);
      std::normal_distribution<double> jitter(0.0, 0.3);
      for (double& x : adapter.data()) x += jitter(rng);

      const bool in_batch = trial % 2 == 0;
      const auto lg = cbr::info_nce_batch_loss(adapter, batch, 0.5, in_batch);
      std::vector<double> params(adapter.data().begin(), adapter.data().end());
      const auto numeric = oracle::numeric_gradient(
          [&](std::vector<double>& x) {
            cbr::Adapter probe(4);
            std::copy(x.begin(), x.end(), probe.data().begin());
            return cbr::info_nce_batch_loss(probe, batch, 0.5, in_batch).loss;
          },
          params);
      CHECK(oracle::max_relative_error(lg.gradient, numeric) < 1e-4);
    }
  }

  TEST_CASE("in-batch negatives skip ids the query already has") {
    std::mt19937_64 rng(7);
    auto a = random_example(rng, 6, 0, 1);  // negative "n0_0"
    auto b = random_example(rng, 6, 1, 1);
    auto c = random_example(rng, 6, 2, 1);
    b.positive_key = a.negative_keys[0];  // already a negative of a
    c.positive_key = a.positive_key;      // a's own positive
    const ContrastiveExample* batch[] = {&a, &b, &c};
    const double tau = 1.0;
    const auto lg = cbr::info_nce_batch_loss(cbr::Adapter(6), batch, tau, true);

    // a: nothing added. b: a's positive (c's duplicates it). c: b's positive.
    const double la = reference_loss(a.query, a.positive, a.negatives, tau);
    const double lb = reference_loss(b.query, b.positive, {b.negatives[0], a.positive}, tau);
    const double lc = reference_loss(c.query, c.positive, {c.negatives[0], b.positive}, tau);
    CHECK(std::abs(lg.loss - (la + lb + lc) / 3.0) < 1e-12);

    const auto off = cbr::info_nce_batch_loss(cbr::Adapter(6), batch, tau, false);
    const double lb0 = reference_loss(b.query, b.positive, b.negatives, tau);
    const double lc0 = reference_loss(c.query, c.positive, c.negatives, tau);
    CHECK(std::abs(off.loss - (la + lb0 + lc0) / 3.0) < 1e-12);
  }

  TEST_CASE("mining matches brute force over the leave-one-out bank") {
    const auto bank = mining_bank();
    const auto view = bank.snapshot();
    auto embeddings =
        std::make_shared<cbr::EmbeddingService>(std::make_shared<cbr::StubEmbedder>(24));
    cbr::Retriever retriever(embeddings);
    const std::size_t k = 5;
    const auto mined = cbr::mine_labels(view, retriever, k);
    REQUIRE(mined.size() == view.size());
    CHECK(cbr::mine_labels(view, retriever, k, 4) == mined);

    for (std::size_t i = 0; i < view.size(); ++i) {
      const auto& query = view[i];
      const auto q = embeddings->raw(query.intent);
      std::vector<std::pair<double, std::string>> ranked;
      for (std::size_t j = 0; j < view.size(); ++j) {
        if (j == i) continue;
        ranked.emplace_back(oracle::cosine(q, embeddings->raw(view[j].intent)), view[j].id);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
      });
      ranked.resize(k);
      std::string best;
      double best_ff1 = -1;
      const auto ref = cbr::extract_functions(query.script);
      for (const auto& [sim, id] : ranked) {
        const double f = cbr::function_f1(cbr::extract_functions(view.find(id)->script), ref);
        if (f > best_ff1) {
          best_ff1 = f;
          best = id;
        }
      }
      const auto& t = mined[i];
      CHECK(t.query_id == query.id);
      CHECK(t.positive_id == best);
      CHECK(t.positive_ff1 == best_ff1);
      CHECK(t.negative_ids.size() == k - 1);
      CHECK(std::find(t.negative_ids.begin(), t.negative_ids.end(), query.id) ==
            t.negative_ids.end());
    }
  }

  TEST_CASE("mining rejects tiny banks") {
    cbr::CaseBank bank;
    bank.retain("only", "f()");
    cbr::Retriever retriever(
        std::make_shared<cbr::EmbeddingService>(std::make_shared<cbr::StubEmbedder>(8)));
    CHECK_THROWS_AS((void)cbr::mine_labels(bank.snapshot(), retriever), cbr::BankTooSmall);
  }

  TEST_CASE("no training leaves the identity") {
    const auto bank = mining_bank();
    auto embeddings =
        std::make_shared<cbr::EmbeddingService>(std::make_shared<cbr::StubEmbedder>(16));
    cbr::Retriever retriever(embeddings);
    const auto triplets = cbr::mine_labels(bank.snapshot(), retriever, 5);
    const auto lookup = cbr::make_base_embedding_lookup(bank.snapshot(), *embeddings);

    cbr::AdapterTrainingConfig zero_epochs;
    zero_epochs.epochs = 0;
    CHECK(cbr::train_adapter(triplets, lookup, 16, zero_epochs).adapter.is_identity());

    cbr::AdapterTrainingConfig zero_lr;
    zero_lr.learning_rate = 0.0;
    const auto r = cbr::train_adapter(triplets, lookup, 16, zero_lr);
    CHECK(r.adapter.is_identity());
    CHECK_FALSE(r.loss_curve.empty());

    cbr::AdapterTrainingConfig normal;
    normal.epochs = 3;
    const auto a = cbr::train_adapter(triplets, lookup, 16, normal);
    const auto b = cbr::train_adapter(triplets, lookup, 16, normal);
    CHECK(a.adapter == b.adapter);
    CHECK(a.loss_curve.back() < a.loss_curve.front());
    CHECK_THROWS_AS((void)cbr::train_adapter(triplets, lookup, 8, normal), cbr::DimensionMismatch);
  }

  TEST_CASE("lookup rejects unknown ids") {
    cbr::CaseBank bank;
    bank.retain("a", "f()");
    cbr::EmbeddingService svc(std::make_shared<cbr::StubEmbedder>(8));
    const auto lookup = cbr::make_base_embedding_lookup(bank.snapshot(), svc);
    CHECK_THROWS_AS((void)lookup("missing"), cbr::MissingEmbedding);
  }

  TEST_CASE("triplets round trip through JSONL") {
    TempDir dir;
    std::vector<cbr::LabeledTriplet> triplets = {{"q1", "p1", {"n1", "n2"}, 0.5},
                                                 {"q2", "p2", {}, 1.0}};
    cbr::write_triplets(dir / "t.jsonl", triplets);
    CHECK(cbr::read_triplets(dir / "t.jsonl") == triplets);
  }
}
