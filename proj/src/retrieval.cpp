#include "cbr/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "cbr/errors.hpp"
#include "http_util.hpp"

namespace cbr {

using nlohmann::json;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(a.size()) +
                            " and " + std::to_string(b.size()));
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------- Adapter

Adapter::Adapter(std::size_t dimension) : dim_(dimension), m_(dimension * dimension, 0.0) {
  if (dimension == 0) throw InvalidArgument("adapter dimension must be positive");
  for (std::size_t i = 0; i < dim_; ++i) m_[i * dim_ + i] = 1.0;
}

Vector Adapter::apply(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw DimensionMismatch("adapter expects dimension " + std::to_string(dim_) + ", got " +
                            std::to_string(x.size()));
  }
  Vector y(dim_, 0.0);
  for (std::size_t r = 0; r < dim_; ++r) {
    const double* row = &m_[r * dim_];
    double s = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

bool Adapter::is_identity() const {
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = 0; c < dim_; ++c) {
      if (m_[r * dim_ + c] != (r == c ? 1.0 : 0.0)) return false;
    }
  }
  return true;
}

Adapter Adapter::scaled(double factor) const {
  Adapter out = *this;
  for (double& v : out.m_) v *= factor;
  return out;
}

json Adapter::to_json() const {
  json rows = json::array();
  for (std::size_t r = 0; r < dim_; ++r) {
    rows.push_back(std::vector<double>(m_.begin() + static_cast<std::ptrdiff_t>(r * dim_),
                                       m_.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_)));
  }
  return json{{"dimension", dim_}, {"trained_steps", trained_steps}, {"matrix", rows}};
}

Adapter Adapter::from_json(const json& j) {
  const auto dim = j.at("dimension").get<std::size_t>();
  Adapter a(dim);
  const auto& rows = j.at("matrix");
  if (!rows.is_array() || rows.size() != dim) throw InvalidArgument("adapter matrix is not square");
  for (std::size_t r = 0; r < dim; ++r) {
    const auto row = rows[r].get<std::vector<double>>();
    if (row.size() != dim) throw InvalidArgument("adapter matrix is not square");
    std::copy(row.begin(), row.end(), a.m_.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  a.trained_steps = j.value("trained_steps", std::uint64_t{0});
  return a;
}

// ---------------------------------------------------------------- stub embedder

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Box-Muller on splitmix output; portable across standard libraries.
void gaussian_direction(std::uint64_t state, std::span<double> out) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(kTwoPi * u2);
    if (i + 1 < out.size()) out[i + 1] = r * std::sin(kTwoPi * u2);
  }
}

}  // namespace

StubEmbedder::StubEmbedder(std::size_t dimension, std::uint64_t seed)
    : dim_(dimension), seed_(seed) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

Vector StubEmbedder::embed_one(std::string_view text) const {
  auto tokens = tokenize_words(text);
  if (tokens.empty()) tokens.emplace_back(text);  // punctuation-only text still embeds
  Vector v(dim_, 0.0);
  Vector direction(dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (const auto& t : tokens) {
    gaussian_direction(fnv1a(t) ^ seed_, direction);
    for (std::size_t i = 0; i < dim_; ++i) v[i] += scale * direction[i];
  }
  return v;
}

std::vector<Vector> StubEmbedder::embed_batch(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

// ---------------------------------------------------------------- http embedder

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config)) {
  if (config_.dimension == 0) throw InvalidArgument("embedding.dimension must be positive");
}

std::vector<Vector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
  const auto endpoint = detail::parse_base_url(config_.base_url);
  const json body{{"model", config_.model}, {"input", texts}};
  const std::string payload = body.dump();
  std::string last_error = "no attempt made";

  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    httplib::Client client(endpoint.origin);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(endpoint.path_prefix + "/embeddings", payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EmbeddingServiceUnavailable("embedding endpoint returned HTTP " +
                                        std::to_string(res->status));
    }
    std::vector<Vector> out(texts.size());
    try {
      const json reply = json::parse(res->body);
      for (const auto& item : reply.at("data")) {
        const auto index = item.value("index", std::size_t{0});
        if (index >= out.size()) throw EmbeddingServiceUnavailable("embedding index out of range");
        out[index] = item.at("embedding").get<Vector>();
      }
    } catch (const json::exception& e) {
      throw EmbeddingServiceUnavailable(std::string("unparseable embedding reply: ") + e.what());
    }
    for (const auto& v : out) {
      if (v.size() != config_.dimension) {
        throw DimensionChanged("embedding endpoint returned dimension " +
                               std::to_string(v.size()) + ", configured " +
                               std::to_string(config_.dimension));
      }
    }
    return out;
  }
  throw EmbeddingServiceUnavailable("embedding endpoint unavailable: " + last_error);
}

// ---------------------------------------------------------------- service

EmbeddingService::EmbeddingService(std::shared_ptr<EmbeddingBackend> backend)
    : backend_(std::move(backend)),
      dimension_(backend_->dimension()),
      adapter_(std::make_shared<const Adapter>(dimension_)) {}

Vector EmbeddingService::raw(std::string_view text) {
  if (text.empty()) throw InvalidArgument("cannot embed empty text");
  const std::string key(text);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second.raw;
    }
  }
  ++backend_calls_;
  auto vectors = backend_->embed_batch({key});
  if (vectors.size() != 1 || vectors[0].size() != dimension_) {
    throw DimensionChanged("embedding backend returned an unexpected shape");
  }
  std::unique_lock lock(mutex_);
  auto [it, inserted] = cache_.try_emplace(key, Entry{std::move(vectors[0]), {}, 0});
  return it->second.raw;
}

Vector EmbeddingService::embed(std::string_view text) {
  const std::string key(text);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(key);
        it != cache_.end() && it->second.adapter_version == adapter_version_ &&
        !it->second.adapted.empty()) {
      ++hits_;
      return it->second.adapted;
    }
  }
  Vector base = raw(text);
  std::unique_lock lock(mutex_);
  Vector adapted = adapter_->is_identity() ? base : adapter_->apply(base);
  auto& entry = cache_[key];
  entry.adapted = adapted;
  entry.adapter_version = adapter_version_;
  return adapted;
}

Vector EmbeddingService::adapt(std::span<const double> raw_vector) const {
  std::shared_ptr<const Adapter> a;
  {
    std::shared_lock lock(mutex_);
    a = adapter_;
  }
  return a->is_identity() ? Vector(raw_vector.begin(), raw_vector.end()) : a->apply(raw_vector);
}

void EmbeddingService::set_adapter(Adapter adapter) {
  if (adapter.dimension() != dimension_) {
    throw DimensionMismatch("adapter dimension " + std::to_string(adapter.dimension()) +
                            " does not match embeddings of dimension " +
                            std::to_string(dimension_));
  }
  std::unique_lock lock(mutex_);
  adapter_ = std::make_shared<const Adapter>(std::move(adapter));
  ++adapter_version_;
}

Adapter EmbeddingService::adapter() const {
  std::shared_lock lock(mutex_);
  return *adapter_;
}

void EmbeddingService::clear_cache() {
  std::unique_lock lock(mutex_);
  cache_.clear();
}

// ---------------------------------------------------------------- retriever

bool retrieval_order(const RetrievalEntry& a, const RetrievalEntry& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.case_id < b.case_id;
}

Retriever::Retriever(std::shared_ptr<EmbeddingService> embeddings)
    : embeddings_(std::move(embeddings)) {}

Vector Retriever::case_vector(const Case& c) const {
  if (c.embedding) return embeddings_->adapt(*c.embedding);
  return embeddings_->embed(c.intent);
}

RetrievalResult Retriever::retrieve_top_k(const CaseBankView& view, std::string_view query,
                                          std::size_t k) const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  RetrievalResult result;
  result.query_revision = view.revision();
  if (view.empty()) return result;

  const Vector q = embeddings_->embed(query);
  std::vector<RetrievalEntry> all;
  all.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    const Case& c = view[i];
    all.push_back({c.id, cosine_similarity(q, case_vector(c))});
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    retrieval_order);
  all.resize(take);
  result.entries = std::move(all);
  return result;
}

}  // namespace cbr
