#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "cbr/metrics.hpp"

using cbr::FunctionCallSet;

TEST_SUITE("metrics") {
  TEST_CASE("motivating example sets") {
    const FunctionCallSet g{"A", "B", "C", "D", "E"};
    const FunctionCallSet r{"B", "E", "F", "G", "H"};
    CHECK(cbr::function_precision(g, r) == 0.4);
    CHECK(cbr::function_recall(g, r) == 0.4);
    CHECK(cbr::function_f1(g, r) == 0.4);
  }

  TEST_CASE("empty-set conventions") {
    const FunctionCallSet none;
    const FunctionCallSet a{"A"};
    CHECK(cbr::function_precision(none, none) == 1.0);
    CHECK(cbr::function_recall(none, none) == 1.0);
    CHECK(cbr::function_f1(none, none) == 1.0);
    CHECK(cbr::function_precision(none, a) == 0.0);
    CHECK(cbr::function_recall(a, none) == 0.0);
    CHECK(cbr::function_f1(none, a) == 0.0);
    CHECK(cbr::function_f1(a, none) == 0.0);
  }

  TEST_CASE("precision one, recall a quarter") {
    const FunctionCallSet g{"A"};
    const FunctionCallSet r{"A", "B", "C", "D"};
    CHECK(cbr::function_precision(g, r) == 1.0);
    CHECK(cbr::function_recall(g, r) == 0.25);
    CHECK(cbr::function_f1(g, r) == 0.4);
    CHECK(cbr::function_recall(FunctionCallSet{"A", "B", "Z"}, FunctionCallSet{"A", "B"}) == 1.0);
    CHECK(cbr::function_f1(FunctionCallSet{"X"}, FunctionCallSet{"Y"}) == 0.0);
  }

  TEST_CASE("random small sets match the brute-force reference") {
    std::mt19937_64 rng(1);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    for (int t = 0; t < 1000; ++t) {
      FunctionCallSet g, r;
      oracle::NameSet og, orr;
      for (std::size_t n = rng() % 7; n > 0; --n) {
        const auto& v = vocab[rng() % vocab.size()];
        g.insert(v);
        og.insert(v);
      }
      for (std::size_t n = rng() % 7; n > 0; --n) {
        const auto& v = vocab[rng() % vocab.size()];
        r.insert(v);
        orr.insert(v);
      }
      CHECK(cbr::function_precision(g, r) == oracle::precision(og, orr));
      CHECK(cbr::function_recall(g, r) == oracle::recall(og, orr));
      CHECK(cbr::function_f1(g, r) == oracle::f1(og, orr));
      // symmetry
      CHECK(cbr::function_f1(g, r) == cbr::function_f1(r, g));
      CHECK(cbr::function_precision(g, r) == cbr::function_recall(r, g));
      const double p = cbr::function_precision(g, r);
      const double rc = cbr::function_recall(g, r);
      const double f = cbr::function_f1(g, r);
      if (p > 0 && rc > 0) {
        CHECK(f <= std::max(p, rc) + 1e-15);
        CHECK(f >= std::min(p, rc) - 1e-15);
        CHECK(std::abs(f - 2.0 * p * rc / (p + rc)) < 1e-15);
      }
    }
  }

  TEST_CASE("levenshtein and code similarity") {
    CHECK(cbr::levenshtein_distance("kitten", "sitting") == 3);
    CHECK(std::abs(cbr::code_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)) < 1e-12);
    CHECK(cbr::code_similarity("same", "same") == 1.0);
    CHECK(cbr::code_similarity("", "") == 1.0);
    CHECK(cbr::code_similarity("", "abc") == 0.0);
  }

  TEST_CASE("levenshtein counts scalar values, not bytes") {
    CHECK(cbr::levenshtein_distance("caf\xc3\xa9", "cafe") == 1);
    CHECK(cbr::decode_utf8("\xff").size() == 1);
    CHECK(cbr::decode_utf8("\xff")[0] == U'\uFFFD');
  }

  TEST_CASE("levenshtein agrees with the full-table oracle; triangle inequality") {
    std::mt19937_64 rng(2);
    auto random_text = [&] {
      std::string s(rng() % 12, 'a');
      for (auto& c : s) c = static_cast<char>('a' + rng() % 4);
      return s;
    };
    for (int t = 0; t < 300; ++t) {
      const auto a = random_text(), b = random_text(), c = random_text();
      const auto ab = cbr::levenshtein_distance(a, b);
      CHECK(ab == oracle::levenshtein(cbr::decode_utf8(a), cbr::decode_utf8(b)));
      CHECK(ab == cbr::levenshtein_distance(b, a));
      CHECK(cbr::levenshtein_distance(a, c) <= ab + cbr::levenshtein_distance(b, c));
      CHECK(cbr::code_similarity(a, b) == cbr::code_similarity(b, a));
    }
  }

  TEST_CASE("score_pair fills all four fields") {
    const auto same = cbr::score_pair("a()\nb()\n", "a()\nb()\n");
    CHECK(same.function_precision == 1.0);
    CHECK(same.function_recall == 1.0);
    CHECK(same.function_f1 == 1.0);
    CHECK(same.code_similarity == 1.0);

    const auto partial = cbr::score_pair("a(x)\nb(x)\n", "b(y)\nc(y)\n");
    CHECK(partial.function_f1 == doctest::Approx(0.5));
    CHECK(partial.code_similarity > 0.0);
    CHECK(partial.code_similarity < 1.0);

    CHECK(cbr::score_pair("x = 1\n", "a()\n").function_f1 == 0.0);
  }

  TEST_CASE("statement order does not change set metrics") {
    const auto a = cbr::score_pair("a()\nb()\nc()\n", "a()\nd()\n");
    const auto b = cbr::score_pair("c()\na()\nb()\n", "a()\nd()\n");
    CHECK(a.function_f1 == b.function_f1);
    CHECK(a.function_precision == b.function_precision);
  }
}
