#include "cbr/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace cbr {

double function_precision(const FunctionCallSet& generated, const FunctionCallSet& reference) {
  if (generated.empty()) return reference.empty() ? 1.0 : 0.0;
  return static_cast<double>(generated.intersection_size(reference)) /
         static_cast<double>(generated.size());
}

double function_recall(const FunctionCallSet& generated, const FunctionCallSet& reference) {
  if (reference.empty()) return generated.empty() ? 1.0 : 0.0;
  return static_cast<double>(generated.intersection_size(reference)) /
         static_cast<double>(reference.size());
}

double function_f1(const FunctionCallSet& generated, const FunctionCallSet& reference) {
  if (generated.empty() && reference.empty()) return 1.0;
  // 2PR/(P+R) reduces to 2|G∩R|/(|G|+|R|); the integer form rounds once.
  const auto both = generated.intersection_size(reference);
  return static_cast<double>(2 * both) /
         static_cast<double>(generated.size() + reference.size());
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char b0 = s[i];
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min_cp = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
      min_cp = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
      min_cp = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
      min_cp = 0x10000;
    }
    bool ok = len != 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (s[i + k] & 0x3F);
      }
    }
    ok = ok && cp >= min_cp && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(U'\uFFFD');
      ++i;
    }
  }
  return out;
}

std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
  std::u32string x = decode_utf8(a);
  std::u32string y = decode_utf8(b);
  if (x.size() < y.size()) std::swap(x, y);
  if (y.empty()) return x.size();

  // Two rows over the shorter string.
  std::vector<std::size_t> prev(y.size() + 1);
  std::vector<std::size_t> cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t substitution = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, substitution});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double code_similarity(std::string_view generated, std::string_view reference) {
  const std::size_t len_a = decode_utf8(generated).size();
  const std::size_t len_b = decode_utf8(reference).size();
  const std::size_t longest = std::max(len_a, len_b);
  if (longest == 0) return 1.0;
  const auto d = levenshtein_distance(generated, reference);
  return 1.0 - static_cast<double>(d) / static_cast<double>(longest);
}

ScriptScore score_pair(std::string_view generated, std::string_view reference) {
  const FunctionCallSet g = extract_functions(generated);
  const FunctionCallSet r = extract_functions(reference);
  ScriptScore score;
  score.function_precision = function_precision(g, r);
  score.function_recall = function_recall(g, r);
  score.function_f1 = function_f1(g, r);
  score.code_similarity = code_similarity(generated, reference);
  return score;
}

}  // namespace cbr
