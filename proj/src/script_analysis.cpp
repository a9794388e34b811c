#include "cbr/script_analysis.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include "cbr/errors.hpp"

namespace cbr {

namespace {

constexpr std::array<std::string_view, 25> kKeywords = {
    "if",   "elif",   "else",   "for",    "while", "return", "def",
    "class", "import", "with",  "not",    "and",   "or",     "in",
    "is",   "lambda", "assert", "raise",  "try",   "except", "finally",
    "pass", "break",  "continue", "yield"};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

bool is_reserved_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

FunctionCallSet::FunctionCallSet(std::initializer_list<std::string> names) {
  for (const auto& n : names) insert(n);
}

bool FunctionCallSet::is_valid_name(std::string_view name) {
  if (name.empty()) return false;
  bool expect_start = true;
  for (char c : name) {
    if (expect_start) {
      if (!is_ident_start(c)) return false;
      expect_start = false;
    } else if (c == '.') {
      expect_start = true;
    } else if (!is_ident_char(c)) {
      return false;
    }
  }
  return !expect_start;
}

bool FunctionCallSet::insert(std::string name) {
  if (!is_valid_name(name)) throw InvalidArgument("invalid call name: '" + name + "'");
  return names_.insert(std::move(name)).second;
}

bool FunctionCallSet::contains(std::string_view name) const {
  return names_.find(name) != names_.end();
}

std::size_t FunctionCallSet::intersection_size(const FunctionCallSet& other) const {
  // Both sides are sorted; a merge walk is linear.
  std::size_t n = 0;
  auto a = names_.begin();
  auto b = other.names_.begin();
  while (a != names_.end() && b != other.names_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++n;
      ++a;
      ++b;
    }
  }
  return n;
}

std::string strip_comments_and_strings(std::string_view text, std::size_t* skipped_regions) {
  std::string out(text);
  std::size_t skipped = 0;
  const std::size_t n = text.size();
  auto blank_out = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to && k < n; ++k) {
      if (out[k] != '\n') out[k] = ' ';
    }
  };

  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c == '#') {
      std::size_t end = text.find('\n', i);
      if (end == std::string_view::npos) end = n;
      blank_out(i, end);
      i = end;
      continue;
    }
    if (c != '"' && c != '\'') {
      ++i;
      continue;
    }

    const bool triple = i + 2 < n && text[i + 1] == c && text[i + 2] == c;
    std::size_t j = i + (triple ? 3 : 1);
    bool closed = false;
    while (j < n) {
      const char d = text[j];
      if (d == '\\') {
        j += 2;
        continue;
      }
      if (triple) {
        if (d == c && j + 2 < n && text[j + 1] == c && text[j + 2] == c) {
          j += 3;
          closed = true;
          break;
        }
      } else {
        if (d == c) {
          ++j;
          closed = true;
          break;
        }
        if (d == '\n') break;  // unterminated single-line literal
      }
      ++j;
    }
    j = std::min(j, n);
    if (!closed) ++skipped;
    blank_out(i, j);
    i = j;
  }
  if (skipped_regions != nullptr) *skipped_regions = skipped;
  return out;
}

ExtractionResult extract_functions_with_diagnostics(std::string_view text) {
  ExtractionResult result;
  const std::string clean = strip_comments_and_strings(text, &result.skipped_regions);
  const std::size_t n = clean.size();

  // The most recent standalone identifier, used to suppress `def name(`.
  std::string_view previous_word;
  std::size_t previous_word_end = 0;

  std::size_t i = 0;
  while (i < n) {
    const char c = clean[i];
    const bool boundary = i == 0 || !is_ident_char(clean[i - 1]);
    if (!is_ident_start(c) || !boundary) {
      ++i;
      continue;
    }

    const std::size_t start = i;
    bool dotted = false;
    while (true) {
      while (i < n && is_ident_char(clean[i])) ++i;
      if (i + 1 < n && clean[i] == '.' && is_ident_start(clean[i + 1])) {
        dotted = true;
        ++i;
        continue;
      }
      break;
    }
    const std::string_view path(clean.data() + start, i - start);

    bool only_blank_between = previous_word_end <= start;
    for (std::size_t k = previous_word_end; only_blank_between && k < start; ++k) {
      if (!is_blank(clean[k])) only_blank_between = false;
    }
    const bool after_definition =
        only_blank_between && (previous_word == "def" || previous_word == "class");

    if (i < n && clean[i] == '(' && !after_definition) {
      if (dotted || !is_reserved_keyword(path)) result.calls.insert(std::string(path));
    }
    previous_word = path;
    previous_word_end = i;
  }
  return result;
}

FunctionCallSet extract_functions(std::string_view text) {
  return extract_functions_with_diagnostics(text).calls;
}

namespace {

std::vector<std::string> normalized_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line;
    bool pending_space = false;
    for (std::size_t k = pos; k < end; ++k) {
      const char c = text[k];
      if (is_blank(c)) {
        pending_space = !line.empty();
        continue;
      }
      if (pending_space) line.push_back(' ');
      pending_space = false;
      line.push_back(c);
    }
    if (!line.empty()) lines.push_back(std::move(line));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return lines;
}

}  // namespace

RepetitionReport detect_repetition(std::string_view text, std::size_t window_lines,
                                   std::size_t min_repeats) {
  if (window_lines < 1) throw InvalidArgument("window_lines must be >= 1");
  if (min_repeats < 2) throw InvalidArgument("min_repeats must be >= 2");

  RepetitionReport report;
  report.window_lines = window_lines;
  const auto lines = normalized_lines(text);
  if (lines.size() < window_lines) return report;

  auto same_window = [&](std::size_t a, std::size_t b) {
    for (std::size_t k = 0; k < window_lines; ++k) {
      if (lines[a + k] != lines[b + k]) return false;
    }
    return true;
  };

  std::size_t best_start = 0;
  for (std::size_t start = 0; start + window_lines <= lines.size(); ++start) {
    std::size_t count = 1;
    std::size_t next = start + window_lines;
    while (next + window_lines <= lines.size() && same_window(start, next)) {
      ++count;
      next += window_lines;
    }
    if (count > report.repeat_count) {
      report.repeat_count = count;
      best_start = start;
    }
  }

  std::string window;
  for (std::size_t k = 0; k < window_lines; ++k) {
    if (k != 0) window.push_back('\n');
    window += lines[best_start + k];
  }
  report.is_repetitive = report.repeat_count >= min_repeats;
  report.repeated_window = report.repeat_count >= 2 ? std::move(window) : std::string();
  return report;
}

RepetitionReport detect_repetition_default(std::string_view text, std::size_t min_repeats) {
  RepetitionReport best = detect_repetition(text, 1, min_repeats);
  for (std::size_t w = 2; w <= 3; ++w) {
    RepetitionReport r = detect_repetition(text, w, min_repeats);
    if (r.is_repetitive && (!best.is_repetitive || r.repeat_count > best.repeat_count)) {
      best = std::move(r);
    }
  }
  return best;
}

}  // namespace cbr
