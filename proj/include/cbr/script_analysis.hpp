#pragma once

#include <cstddef>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>

namespace cbr {

enum class LanguageProfile { python_like };

struct ScriptSource {
  std::string text;
  LanguageProfile profile = LanguageProfile::python_like;
};

// Set of fully qualified call names (dot-joined identifier paths). Iteration
// is in sorted order; equality ignores insertion order.
class FunctionCallSet {
 public:
  using const_iterator = std::set<std::string>::const_iterator;

  FunctionCallSet() = default;
  FunctionCallSet(std::initializer_list<std::string> names);
  template <typename It>
  FunctionCallSet(It first, It last) {
    for (; first != last; ++first) insert(*first);
  }

  // Returns false when `name` is already present. Throws InvalidArgument when
  // `name` does not match identifier ("." identifier)*.
  bool insert(std::string name);
  bool contains(std::string_view name) const;
  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const_iterator begin() const noexcept { return names_.begin(); }
  const_iterator end() const noexcept { return names_.end(); }

  // |this ∩ other|
  std::size_t intersection_size(const FunctionCallSet& other) const;

  friend bool operator==(const FunctionCallSet&, const FunctionCallSet&) = default;

  static bool is_valid_name(std::string_view name);

 private:
  std::set<std::string, std::less<>> names_;
};

struct ExtractionResult {
  FunctionCallSet calls;
  // Unterminated strings and similar regions that were skipped.
  std::size_t skipped_regions = 0;
};

// Python-like lexical extraction: comments and string literals are removed,
// then every dotted identifier path directly followed by "(" is collected.
// Control keywords and names introduced by `def`/`class` are never emitted.
// Total on arbitrary bytes.
ExtractionResult extract_functions_with_diagnostics(std::string_view text);
FunctionCallSet extract_functions(std::string_view text);
inline FunctionCallSet extract_functions(const ScriptSource& script) {
  return extract_functions(script.text);
}

// Replaces comment and string-literal bytes with spaces, preserving newlines
// so line structure survives. Exposed for callers that want the scrubbed text.
std::string strip_comments_and_strings(std::string_view text,
                                       std::size_t* skipped_regions = nullptr);

bool is_reserved_keyword(std::string_view word);

struct RepetitionReport {
  bool is_repetitive = false;
  std::string repeated_window;  // normalized lines joined with '\n'
  std::size_t repeat_count = 0;
  std::size_t window_lines = 1;
};

inline constexpr std::size_t kDefaultMinRepeats = 3;

// Longest run of consecutive identical windows of `window_lines` normalized
// lines. Lines are whitespace-normalized and blank lines dropped first.
// Throws InvalidArgument when window_lines < 1 or min_repeats < 2.
RepetitionReport detect_repetition(std::string_view text, std::size_t window_lines,
                                   std::size_t min_repeats = kDefaultMinRepeats);

// Scans windows of 1, 2 and 3 lines and returns the strongest report.
RepetitionReport detect_repetition_default(std::string_view text,
                                           std::size_t min_repeats = kDefaultMinRepeats);

}  // namespace cbr
