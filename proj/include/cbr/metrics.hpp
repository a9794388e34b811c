#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "cbr/script_analysis.hpp"

namespace cbr {

struct ScriptScore {
  double function_precision = 0.0;
  double function_recall = 0.0;
  double function_f1 = 0.0;
  double code_similarity = 0.0;
};

// Set-based function metrics. Zero denominators are totalized: two empty sets
// agree perfectly (1.0); an empty side against a nonempty one scores 0.0.
double function_precision(const FunctionCallSet& generated, const FunctionCallSet& reference);
double function_recall(const FunctionCallSet& generated, const FunctionCallSet& reference);
double function_f1(const FunctionCallSet& generated, const FunctionCallSet& reference);

// Levenshtein distance over Unicode scalar values. Invalid UTF-8 bytes decode
// to U+FFFD one byte at a time.
std::size_t levenshtein_distance(std::string_view a, std::string_view b);

// 1 - d_L / max(|a|, |b|), with |.| counted in scalar values; 1.0 when both empty.
double code_similarity(std::string_view generated, std::string_view reference);

ScriptScore score_pair(std::string_view generated, std::string_view reference);
inline ScriptScore score_pair(const ScriptSource& generated, const ScriptSource& reference) {
  return score_pair(generated.text, reference.text);
}

std::u32string decode_utf8(std::string_view text);

}  // namespace cbr
