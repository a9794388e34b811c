#include <doctest.h>

#include <set>

#include <fstream>
#include <random>
#include <thread>

#include "cbr/case_bank.hpp"
#include "cbr/errors.hpp"
#include "temp_dir.hpp"

using cbr::Case;
using cbr::CaseBank;
using cbr::CaseSource;

namespace {

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += line.empty() ? 0 : 1;
  return n;
}

}  // namespace

TEST_SUITE("case_bank") {
  TEST_CASE("retain into an empty bank") {
    CaseBank bank;
    const Case c = bank.retain("verify ospf adjacency", "ospf.up()\n");
    CHECK(bank.size() == 1);
    CHECK(bank.revision() == 1);
    CHECK(c.source == CaseSource::retained);
    CHECK_FALSE(c.id.empty());
    CHECK_FALSE(c.created_at.empty());
  }

  TEST_CASE("identical retains are not deduplicated") {
    TempDir dir;
    auto bank = CaseBank::open(dir / "bank.jsonl");
    const auto a = bank.retain("same", "x()\n");
    const auto b = bank.retain("same", "x()\n");
    CHECK(a.id != b.id);
    CHECK(bank.size() == 2);
    CHECK(count_lines(dir / "bank.jsonl") == 2);
  }

  TEST_CASE("invalid retains") {
    CaseBank bank(4);
    CHECK_THROWS_AS(bank.retain("q", "s", {cbr::Vector{1, 2, 3}, CaseSource::seed, std::nullopt}),
                    cbr::EmbeddingDimensionMismatch);
    CHECK_THROWS_AS(bank.retain("", "s"), cbr::InvalidCase);
    bank.retain("q", "s", {std::nullopt, CaseSource::seed, std::string("fixed")});
    CHECK_THROWS_AS(bank.retain("q", "s", {std::nullopt, CaseSource::seed, std::string("fixed")}),
                    cbr::DuplicateCaseId);
    CHECK(bank.revision() == 1);
  }

  TEST_CASE("first embedding fixes the dimension") {
    CaseBank bank;
    bank.retain("q", "s", {cbr::Vector{1, 0}, CaseSource::seed, std::nullopt});
    CHECK(bank.embedding_dimension() == 2u);
    CHECK_THROWS_AS(bank.retain("q", "s", {cbr::Vector{1, 0, 0}, CaseSource::seed, std::nullopt}),
                    cbr::EmbeddingDimensionMismatch);
  }

  TEST_CASE("leave-one-out views") {
    CaseBank one;
    const auto c = one.retain("only", "a()");
    CHECK(one.leave_one_out(c.id).empty());

    CaseBank bank;
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back(bank.retain("q" + std::to_string(i), "s").id);
    const auto view = bank.leave_one_out(ids[4]);
    CHECK(view.size() == 9);
    CHECK_FALSE(view.contains(ids[4]));
    for (std::size_t i = 0; i < view.size(); ++i) CHECK(view[i].id != ids[4]);
    CHECK_THROWS_AS((void)bank.leave_one_out("missing"), cbr::UnknownCaseId);
    const auto nested = view.leave_one_out(ids[0]);
    CHECK(nested.size() == 8);
    CHECK_FALSE(nested.contains(ids[4]));
    CHECK_FALSE(nested.contains(ids[0]));
    CHECK_THROWS_AS((void)view.leave_one_out(ids[4]), cbr::UnknownCaseId);
  }

  TEST_CASE("snapshots do not observe later retains") {
    CaseBank bank;
    bank.retain("a", "x");
    const auto snap = bank.snapshot();
    bank.retain("b", "y");
    CHECK(snap.size() == 1);
    CHECK(snap.revision() == 1);
    CHECK(bank.snapshot().size() == 2);
  }

  TEST_CASE("save and load round trip") {
    TempDir dir;
    CaseBank empty;
    empty.save(dir / "empty.jsonl");
    CHECK(CaseBank::load(dir / "empty.jsonl").size() == 0);

    std::mt19937_64 rng(9);
    CaseBank bank(3);
    for (int i = 0; i < 100; ++i) {
      std::optional<cbr::Vector> emb;
      if (rng() % 2) emb = cbr::Vector{double(rng() % 100) / 7.0, -1.5, 1e-3 * double(i)};
      std::string script = "f" + std::to_string(i) + "(\"q\\\"uote\")\n\tüñí\n";
      bank.retain("intent " + std::to_string(rng()), script,
                  {emb, static_cast<CaseSource>(rng() % 3), std::nullopt});
    }
    bank.save(dir / "bank.jsonl");
    const auto loaded = CaseBank::load(dir / "bank.jsonl");
    REQUIRE(loaded.size() == bank.size());
    const auto a = bank.snapshot();
    const auto b = loaded.snapshot();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  TEST_CASE("truncated final line reports its line number") {
    TempDir dir;
    CaseBank bank;
    bank.retain("a", "x()");
    bank.retain("b", "y()");
    bank.save(dir / "bank.jsonl");
    std::string text;
    {
      std::ifstream in(dir / "bank.jsonl");
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    text.resize(text.size() - 10);
    {
      std::ofstream out(dir / "bank.jsonl", std::ios::trunc);
      out << text;
    }
    try {
      (void)CaseBank::load(dir / "bank.jsonl");
      FAIL("expected MalformedRecord");
    } catch (const cbr::MalformedRecord& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("open appends durably and reloads") {
    TempDir dir;
    {
      auto bank = CaseBank::open(dir / "bank.jsonl");
      bank.retain("one", "a()");
      bank.retain("two", "b()");
    }
    auto again = CaseBank::open(dir / "bank.jsonl");
    CHECK(again.size() == 2);
    CHECK(again.revision() == 2);
    const auto c = again.retain("three", "c()");
    CHECK(again.size() == 3);
    CHECK(CaseBank::load(dir / "bank.jsonl").contains(c.id));
  }

  TEST_CASE("concurrent retains keep revision monotone and ids unique") {
    CaseBank bank;
    {
      std::vector<std::jthread> workers;
      for (int t = 0; t < 4; ++t) {
        workers.emplace_back([&bank, t] {
          for (int i = 0; i < 50; ++i) bank.retain("t" + std::to_string(t), "x()");
        });
      }
    }
    CHECK(bank.size() == 200);
    CHECK(bank.revision() == 200);
    const auto view = bank.snapshot();
    std::set<std::string> ids;
    for (std::size_t i = 0; i < view.size(); ++i) ids.insert(view[i].id);
    CHECK(ids.size() == 200);
  }

  TEST_CASE("source names round trip") {
    for (auto s : {CaseSource::seed, CaseSource::retained, CaseSource::revised}) {
      CHECK(cbr::case_source_from_string(cbr::to_string(s)) == s);
    }
  }
}
