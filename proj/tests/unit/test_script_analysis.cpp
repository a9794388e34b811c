#include <doctest.h>

#include <random>

#include "../oracles.hpp"
#include "cbr/errors.hpp"
#include "cbr/evaluation.hpp"
#include "cbr/script_analysis.hpp"

using cbr::FunctionCallSet;
using cbr::extract_functions;

namespace {

oracle::NameSet as_names(const FunctionCallSet& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_SUITE("script_analysis") {
  TEST_CASE("empty input has no calls") { CHECK(extract_functions("").empty()); }

  TEST_CASE("plain calls") {
    const std::string text = "configure_ospf(r1)\ncheck_status(r1, timeout=5)";
    CHECK(extract_functions(text) == FunctionCallSet{"configure_ospf", "check_status"});
    CHECK(as_names(extract_functions(text)) == oracle::calls_in_clean_text(text));
  }

  TEST_CASE("comments and strings are stripped, nested calls kept") {
    const std::string text = "dev.cli.run(build_cmd(x)) # run(y)\ns = \"fake(z)\"\n";
    CHECK(extract_functions(text) == FunctionCallSet{"dev.cli.run", "build_cmd"});
  }

  TEST_CASE("keywords and definitions are not calls") {
    const std::string text =
        "def helper(x):\n    if (x):\n        return (x)\n    assert (x)\n"
        "class Thing(object):\n    pass\nwhile(True): print(x)\n";
    CHECK(extract_functions(text) == FunctionCallSet{"print"});
  }

  TEST_CASE("name followed by space then paren is not a call") {
    CHECK(extract_functions("f (x)").empty());
    CHECK(extract_functions("a.b(\n)") == FunctionCallSet{"a.b"});
  }

  TEST_CASE("triple-quoted strings and escapes") {
    const std::string text =
        "\"\"\"doc with call_a() and 'quote'\n more call_b()\"\"\"\n"
        "x = 'it\\'s f(1)'\n"
        "real_call()\n"
        "y = '''g()'''\n";
    CHECK(extract_functions(text) == FunctionCallSet{"real_call"});
  }

  TEST_CASE("unterminated regions are skipped and counted") {
    auto r = cbr::extract_functions_with_diagnostics("a()\nb = 'open(\nc()\n");
    CHECK(r.calls == FunctionCallSet{"a", "c"});
    CHECK(r.skipped_regions == 1);
    r = cbr::extract_functions_with_diagnostics("a()\n\"\"\"never closed d()\ne()\n");
    CHECK(r.calls == FunctionCallSet{"a"});
    CHECK(r.skipped_regions == 1);
  }

  TEST_CASE("stripping preserves line structure") {
    const std::string text = "a() # c\nb = 'x'\n";
    const auto stripped = cbr::strip_comments_and_strings(text);
    CHECK(stripped.size() == text.size());
    CHECK(std::count(stripped.begin(), stripped.end(), '\n') == 2);
  }

  TEST_CASE("arbitrary bytes never throw") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
      std::string text(static_cast<std::size_t>(rng() % 200), '\0');
      for (auto& c : text) c = static_cast<char>(rng() & 0xff);
      CHECK_NOTHROW((void)extract_functions(text));
    }
  }

  TEST_CASE("regex oracle agrees on clean random programs") {
    const std::vector<std::string> atoms = {"f", "a.b", "x.y.z", "if", "return", "not", "print",
                                            "def", "g1", "_h"};
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; ++i) {
      std::string text;
      for (int t = 0; t < 12; ++t) {
        text += atoms[rng() % atoms.size()];
        switch (rng() % 5) {
          case 0: text += "("; break;
          case 1: text += " ("; break;
          case 2: text += "\n"; break;
          case 3: text += ", "; break;
          default: text += ")"; break;
        }
      }
      CHECK(as_names(extract_functions(text)) == oracle::calls_in_clean_text(text));
    }
  }

  TEST_CASE("idempotent under comment and blank-line removal") {
    const std::string with = "a()\n\n# b()\n\nc.d(e())  # f()\n";
    const std::string without = "a()\nc.d(e())\n";
    CHECK(extract_functions(with) == extract_functions(without));
  }

  TEST_CASE("synthetic corpus scripts match recorded call sets") {
    cbr::SyntheticCorpusSpec spec;
    spec.modules = 4;
    spec.cases_per_module = 25;
    spec.seed = 5;
    for (const auto& c : cbr::generate_corpus(spec).timeline) {
      CHECK(extract_functions(c.item.script) == c.calls);
    }
  }

  TEST_CASE("call set validates names and collapses duplicates") {
    FunctionCallSet s;
    CHECK(s.insert("a.b"));
    CHECK_FALSE(s.insert("a.b"));
    CHECK_THROWS_AS(s.insert("1abc"), cbr::InvalidArgument);
    CHECK_THROWS_AS(s.insert("a..b"), cbr::InvalidArgument);
    CHECK_THROWS_AS(s.insert(""), cbr::InvalidArgument);
    CHECK((FunctionCallSet{"x", "y"} == FunctionCallSet{"y", "x"}));
    CHECK(FunctionCallSet{"a", "b", "c"}.intersection_size(FunctionCallSet{"b", "c", "d"}) == 2);
  }

  TEST_CASE("repetition detection") {
    auto r = cbr::detect_repetition("a()\nb()", 1, 3);
    CHECK_FALSE(r.is_repetitive);
    CHECK(r.repeat_count <= 1);

    std::string ten;
    for (int i = 0; i < 10; ++i) ten += "x()\n";
    r = cbr::detect_repetition(ten, 1, 3);
    CHECK(r.is_repetitive);
    CHECK(r.repeat_count == 10);

    std::string block = "setup()\n";
    for (int i = 0; i < 4; ++i) block += "dev.send(cmd)\ndev.check(result)\n";
    r = cbr::detect_repetition(block, 2, 3);
    CHECK(r.is_repetitive);
    CHECK(r.repeat_count == 4);
    CHECK(cbr::detect_repetition_default(block).is_repetitive);

    CHECK_THROWS_AS(cbr::detect_repetition("x", 0, 3), cbr::InvalidArgument);
    CHECK_THROWS_AS(cbr::detect_repetition("x", 1, 1), cbr::InvalidArgument);
  }

  TEST_CASE("repetition ignores trailing whitespace and blank lines") {
    const std::string a = "x()\nx()\nx()\n";
    const std::string b = "x()   \n\n  x()\t\nx() \n\n";
    CHECK(cbr::detect_repetition(a, 1).repeat_count == cbr::detect_repetition(b, 1).repeat_count);
  }
}
