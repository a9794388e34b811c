#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cbr/case_bank.hpp"

namespace cbr {

// a·b / (‖a‖‖b‖). Throws DimensionMismatch or ZeroVector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Square linear map applied to base embeddings before cosine similarity.
// Starts as the identity.
class Adapter {
 public:
  explicit Adapter(std::size_t dimension = 1);

  std::size_t dimension() const noexcept { return dim_; }
  double& at(std::size_t row, std::size_t col) { return m_[row * dim_ + col]; }
  double at(std::size_t row, std::size_t col) const { return m_[row * dim_ + col]; }
  std::span<double> data() noexcept { return m_; }
  std::span<const double> data() const noexcept { return m_; }

  Vector apply(std::span<const double> x) const;
  bool is_identity() const;
  Adapter scaled(double factor) const;

  std::uint64_t trained_steps = 0;

  nlohmann::json to_json() const;
  static Adapter from_json(const nlohmann::json& j);

  friend bool operator==(const Adapter&, const Adapter&) = default;

 private:
  std::size_t dim_;
  std::vector<double> m_;
};

// Source of frozen base embeddings.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

// Lowercased [a-z0-9_] word tokens.
std::vector<std::string> tokenize_words(std::string_view text);

// Offline deterministic embedder: each word token maps to a fixed Gaussian
// direction seeded from its hash; a text embeds to the count-weighted sum.
class StubEmbedder final : public EmbeddingBackend {
 public:
  explicit StubEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0x5eed);
  std::size_t dimension() const override { return dim_; }
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;
  std::string id() const override { return "stub"; }

  Vector embed_one(std::string_view text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

struct HttpEmbedderConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "bge-m3";
  std::size_t dimension = 1024;
  int timeout_ms = 10000;
  int max_retries = 2;
};

// Client for an OpenAI-style embeddings endpoint: POST {base}/embeddings with
// {"model", "input": [...]}, reading data[i].embedding.
class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config);
  std::size_t dimension() const override { return config_.dimension; }
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;
  std::string id() const override { return "http:" + config_.model; }

 private:
  HttpEmbedderConfig config_;
};

// Caching front of an EmbeddingBackend with the trainable adapter on top.
// Thread-safe.
class EmbeddingService {
 public:
  explicit EmbeddingService(std::shared_ptr<EmbeddingBackend> backend);

  std::size_t dimension() const { return dimension_; }

  // Frozen base vector (cached by content). Throws InvalidArgument on empty
  // text, DimensionChanged when the backend drifts from its declared size.
  Vector raw(std::string_view text);
  // Base vector passed through the adapter.
  Vector embed(std::string_view text);
  Vector adapt(std::span<const double> raw_vector) const;

  void set_adapter(Adapter adapter);
  Adapter adapter() const;

  void clear_cache();
  std::uint64_t cache_hits() const { return hits_.load(); }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }

 private:
  struct Entry {
    Vector raw;
    Vector adapted;
    std::uint64_t adapter_version = 0;
  };

  std::shared_ptr<EmbeddingBackend> backend_;
  std::size_t dimension_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Entry> cache_;
  std::shared_ptr<const Adapter> adapter_;
  std::uint64_t adapter_version_ = 0;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
};

struct RetrievalEntry {
  std::string case_id;
  double similarity = 0.0;
};

struct RetrievalResult {
  std::vector<RetrievalEntry> entries;  // similarity desc, then id asc
  std::uint64_t query_revision = 0;
};

// Exhaustive top-k cosine search over a bank snapshot.
class Retriever {
 public:
  explicit Retriever(std::shared_ptr<EmbeddingService> embeddings);

  RetrievalResult retrieve_top_k(const CaseBankView& view, std::string_view query,
                                 std::size_t k) const;

  // Adapted embedding for a case: its stored base vector if present,
  // otherwise the embedded intent.
  Vector case_vector(const Case& c) const;

  EmbeddingService& embeddings() const { return *embeddings_; }
  std::shared_ptr<EmbeddingService> embeddings_ptr() const { return embeddings_; }

 private:
  std::shared_ptr<EmbeddingService> embeddings_;
};

bool retrieval_order(const RetrievalEntry& a, const RetrievalEntry& b);

}  // namespace cbr
