#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cbr {

using Vector = std::vector<double>;

enum class CaseSource { seed, retained, revised };

std::string_view to_string(CaseSource source);
CaseSource case_source_from_string(std::string_view text);

// One (intent, script) pair. Immutable once stored in a bank.
struct Case {
  std::string id;
  std::string intent;
  std::string script;
  std::optional<Vector> embedding;
  std::string created_at;  // RFC 3339, UTC
  CaseSource source = CaseSource::seed;

  friend bool operator==(const Case&, const Case&) = default;
};

nlohmann::json to_json(const Case& c);
Case case_from_json(const nlohmann::json& j);

std::string rfc3339_now();

using CaseList = std::vector<std::shared_ptr<const Case>>;

// Read-only snapshot of a bank at one revision, optionally hiding one case.
// Cheap to copy; never observes later retains.
class CaseBankView {
 public:
  CaseBankView() : cases_(std::make_shared<CaseList>()) {}
  CaseBankView(std::shared_ptr<const CaseList> cases, std::uint64_t revision)
      : cases_(std::move(cases)), revision_(revision) {}

  std::size_t size() const noexcept {
    return cases_->size() - (excluded_ == kNone ? 0 : 1);
  }
  bool empty() const noexcept { return size() == 0; }
  const Case& operator[](std::size_t i) const {
    return *(*cases_)[excluded_ != kNone && i >= excluded_ ? i + 1 : i];
  }
  std::shared_ptr<const Case> shared(std::size_t i) const {
    return (*cases_)[excluded_ != kNone && i >= excluded_ ? i + 1 : i];
  }
  std::uint64_t revision() const noexcept { return revision_; }

  const Case* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  // Hides `held_out`. Throws UnknownCaseId when it is not visible here.
  CaseBankView leave_one_out(std::string_view held_out) const;

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::shared_ptr<const CaseList> cases_;
  std::uint64_t revision_ = 0;
  std::size_t excluded_ = kNone;
};

// Append-only case store. Retains are serialized; readers take snapshots.
// When attached to a file, every retain is appended and fsync'ed before the
// call returns.
class CaseBank {
 public:
  explicit CaseBank(std::optional<std::size_t> embedding_dimension = std::nullopt);
  CaseBank(CaseBank&&) noexcept;
  CaseBank& operator=(CaseBank&&) noexcept;
  ~CaseBank();

  // Loads an existing JSONL file (if present) and appends future retains to it.
  static CaseBank open(const std::filesystem::path& path,
                       std::optional<std::size_t> embedding_dimension = std::nullopt);
  // Reads a JSONL file into an in-memory bank. Throws MalformedRecord or
  // StorageFailure.
  static CaseBank load(const std::filesystem::path& path,
                       std::optional<std::size_t> embedding_dimension = std::nullopt);

  struct RetainOptions {
    std::optional<Vector> embedding;
    CaseSource source = CaseSource::retained;
    std::optional<std::string> id;  // caller-chosen id; must be unused
  };

  // Throws InvalidCase (empty intent), EmbeddingDimensionMismatch,
  // DuplicateCaseId, StorageFailure.
  Case retain(std::string intent, std::string script, RetainOptions options);
  Case retain(std::string intent, std::string script) {
    return retain(std::move(intent), std::move(script), RetainOptions{});
  }

  CaseBankView snapshot() const;
  CaseBankView leave_one_out(std::string_view held_out) const {
    return snapshot().leave_one_out(held_out);
  }

  // Writes the whole bank atomically (temp file + rename).
  void save(const std::filesystem::path& path) const;

  std::size_t size() const;
  std::uint64_t revision() const;
  std::optional<std::size_t> embedding_dimension() const;
  bool contains(std::string_view id) const;
  const std::optional<std::filesystem::path>& store_path() const { return store_; }

 private:
  void append_to_store(const Case& c) const;

  std::unique_ptr<std::mutex> write_mutex_;
  std::shared_ptr<const CaseList> cases_;
  std::uint64_t revision_ = 0;
  std::optional<std::size_t> embedding_dimension_;
  std::optional<std::filesystem::path> store_;
};

}  // namespace cbr
