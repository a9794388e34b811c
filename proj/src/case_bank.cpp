#include "cbr/case_bank.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <unordered_set>

#include <unistd.h>

#include "cbr/errors.hpp"

namespace cbr {

using nlohmann::json;

std::string_view to_string(CaseSource source) {
  switch (source) {
    case CaseSource::seed:
      return "seed";
    case CaseSource::retained:
      return "retained";
    case CaseSource::revised:
      return "revised";
  }
  return "seed";
}

CaseSource case_source_from_string(std::string_view text) {
  if (text == "seed") return CaseSource::seed;
  if (text == "retained") return CaseSource::retained;
  if (text == "revised") return CaseSource::revised;
  throw InvalidArgument("unknown case source '" + std::string(text) + "'");
}

json to_json(const Case& c) {
  json j;
  j["id"] = c.id;
  j["intent"] = c.intent;
  j["script"] = c.script;
  j["embedding"] = c.embedding ? json(*c.embedding) : json(nullptr);
  j["created_at"] = c.created_at;
  j["source"] = std::string(to_string(c.source));
  return j;
}

Case case_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("case record is not a JSON object");
  Case c;
  c.id = j.at("id").get<std::string>();
  c.intent = j.at("intent").get<std::string>();
  c.script = j.at("script").get<std::string>();
  if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
    c.embedding = it->get<Vector>();
  }
  c.created_at = j.value("created_at", std::string());
  c.source = case_source_from_string(j.value("source", std::string("seed")));
  return c;
}

std::string rfc3339_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const Case* CaseBankView::find(std::string_view id) const {
  for (std::size_t i = 0; i < cases_->size(); ++i) {
    if (i == excluded_) continue;
    if ((*cases_)[i]->id == id) return (*cases_)[i].get();
  }
  return nullptr;
}

CaseBankView CaseBankView::leave_one_out(std::string_view held_out) const {
  if (excluded_ != kNone) {
    // Nested hold-outs materialize a filtered list.
    auto filtered = std::make_shared<CaseList>();
    bool found = false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!found && (*this)[i].id == held_out) {
        found = true;
        continue;
      }
      filtered->push_back(shared(i));
    }
    if (!found) throw UnknownCaseId("unknown case id '" + std::string(held_out) + "'");
    return CaseBankView(std::move(filtered), revision_);
  }
  for (std::size_t i = 0; i < cases_->size(); ++i) {
    if ((*cases_)[i]->id == held_out) {
      CaseBankView view = *this;
      view.excluded_ = i;
      return view;
    }
  }
  throw UnknownCaseId("unknown case id '" + std::string(held_out) + "'");
}

CaseBank::CaseBank(std::optional<std::size_t> embedding_dimension)
    : write_mutex_(std::make_unique<std::mutex>()),
      cases_(std::make_shared<CaseList>()),
      embedding_dimension_(embedding_dimension) {
  if (embedding_dimension_ && *embedding_dimension_ == 0) {
    throw InvalidArgument("embedding dimension must be positive");
  }
}

CaseBank::CaseBank(CaseBank&&) noexcept = default;
CaseBank& CaseBank::operator=(CaseBank&&) noexcept = default;
CaseBank::~CaseBank() = default;

namespace {

void validate_embedding(const Vector& v, std::optional<std::size_t>& dimension) {
  if (v.empty()) throw EmbeddingDimensionMismatch("embedding must not be empty");
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidCase("embedding has non-finite entries");
  }
  if (dimension && v.size() != *dimension) {
    throw EmbeddingDimensionMismatch("embedding has dimension " + std::to_string(v.size()) +
                                     ", bank expects " + std::to_string(*dimension));
  }
  if (!dimension) dimension = v.size();
}

}  // namespace

CaseBank CaseBank::load(const std::filesystem::path& path,
                        std::optional<std::size_t> embedding_dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageFailure("cannot open case bank '" + path.string() + "'");

  CaseBank bank(embedding_dimension);
  auto list = std::make_shared<CaseList>();
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Case c;
    try {
      c = case_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const InvalidArgument& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (c.intent.empty()) throw MalformedRecord(line_no, "empty intent");
    if (!ids.insert(c.id).second) throw MalformedRecord(line_no, "duplicate id '" + c.id + "'");
    if (c.embedding) {
      try {
        validate_embedding(*c.embedding, bank.embedding_dimension_);
      } catch (const Error& e) {
        throw MalformedRecord(line_no, e.what());
      }
    }
    list->push_back(std::make_shared<const Case>(std::move(c)));
  }
  if (in.bad()) throw StorageFailure("read error on '" + path.string() + "'");
  bank.revision_ = list->size();
  bank.cases_ = std::move(list);
  return bank;
}

CaseBank CaseBank::open(const std::filesystem::path& path,
                        std::optional<std::size_t> embedding_dimension) {
  CaseBank bank = std::filesystem::exists(path) ? load(path, embedding_dimension)
                                                : CaseBank(embedding_dimension);
  if (!std::filesystem::exists(path)) {
    std::ofstream touch(path, std::ios::binary | std::ios::app);
    if (!touch) throw StorageFailure("cannot create case bank '" + path.string() + "'");
  }
  bank.store_ = path;
  return bank;
}

void CaseBank::append_to_store(const Case& c) const {
  const std::string line = to_json(c).dump() + "\n";
  std::FILE* f = std::fopen(store_->c_str(), "ab");
  if (f == nullptr) {
    throw StorageFailure("cannot open '" + store_->string() + "': " + std::strerror(errno));
  }
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                  std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
  const bool closed = std::fclose(f) == 0;
  if (!ok || !closed) throw StorageFailure("write to '" + store_->string() + "' failed");
}

Case CaseBank::retain(std::string intent, std::string script, RetainOptions options) {
  if (intent.empty()) throw InvalidCase("intent must be nonempty");
  std::lock_guard lock(*write_mutex_);

  auto dimension = embedding_dimension_;
  if (options.embedding) validate_embedding(*options.embedding, dimension);

  auto taken = [&](std::string_view id) {
    for (const auto& c : *cases_) {
      if (c->id == id) return true;
    }
    return false;
  };

  Case c;
  if (options.id) {
    if (options.id->empty()) throw InvalidCase("case id must be nonempty");
    if (taken(*options.id)) throw DuplicateCaseId("case id '" + *options.id + "' already exists");
    c.id = std::move(*options.id);
  } else {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%08llu", static_cast<unsigned long long>(revision_ + 1));
    c.id = buf;
    for (int suffix = 1; taken(c.id); ++suffix) {
      c.id = std::string(buf) + "-" + std::to_string(suffix);
    }
  }
  c.intent = std::move(intent);
  c.script = std::move(script);
  c.embedding = std::move(options.embedding);
  c.created_at = rfc3339_now();
  c.source = options.source;

  // Write-ahead: the record is durable before the in-memory bank changes.
  if (store_) append_to_store(c);

  auto next = std::make_shared<CaseList>(*cases_);
  next->push_back(std::make_shared<const Case>(c));
  cases_ = std::move(next);
  embedding_dimension_ = dimension;
  ++revision_;
  return c;
}

CaseBankView CaseBank::snapshot() const {
  std::lock_guard lock(*write_mutex_);
  return CaseBankView(cases_, revision_);
}

void CaseBank::save(const std::filesystem::path& path) const {
  const auto view = snapshot();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageFailure("cannot write '" + tmp.string() + "'");
    for (std::size_t i = 0; i < view.size(); ++i) out << to_json(view[i]).dump() << '\n';
    out.flush();
    if (!out) throw StorageFailure("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageFailure("rename to '" + path.string() + "' failed: " + ec.message());
}

std::size_t CaseBank::size() const { return snapshot().size(); }
std::uint64_t CaseBank::revision() const {
  std::lock_guard lock(*write_mutex_);
  return revision_;
}
std::optional<std::size_t> CaseBank::embedding_dimension() const {
  std::lock_guard lock(*write_mutex_);
  return embedding_dimension_;
}
bool CaseBank::contains(std::string_view id) const { return snapshot().contains(id); }

}  // namespace cbr
