#pragma once

// Numerals in free text: question number lists, final-answer extraction and
// numeral counting.

#include "gsmr/numeric.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsmr {

struct Numeral {
  Rational value;
  bool integer = true;  // no fractional part written
  std::size_t begin = 0;
  std::size_t end = 0;
};

namespace detail {

inline bool is_digit_at(std::string_view s, std::size_t i) {
  return i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]));
}

// LaTeX thousands groups ("7{,}425") become plain commas; positions shift, so
// callers that need offsets into the original text should not normalize.
inline std::string normalize_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.substr(i, 3) == "{,}") {
      out.push_back(',');
      i += 2;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

}  // namespace detail

// Every numeral in textual order. Thousands separators ("7,425") are folded
// into one value; a minus sign counts only when it directly precedes the
// digits and does not follow an operand ("=-3" is negative, "10-3" is not).
inline std::vector<Numeral> scan_numerals(std::string_view text) {
  using detail::is_digit_at;
  std::vector<Numeral> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit_at(text, i)) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    std::string digits;
    while (is_digit_at(text, i)) digits.push_back(text[i++]);
    // Comma groups only when the leading run is 1-3 digits and every group is 3.
    if (digits.size() <= 3) {
      while (i + 3 < text.size() && text[i] == ',' && is_digit_at(text, i + 1) && is_digit_at(text, i + 2) &&
             is_digit_at(text, i + 3) && !is_digit_at(text, i + 4)) {
        digits.append(text.substr(i + 1, 3));
        i += 4;
      }
    }
    bool integer = true;
    std::string frac;
    if (i + 1 < text.size() && text[i] == '.' && is_digit_at(text, i + 1)) {
      integer = false;
      ++i;
      while (is_digit_at(text, i)) frac.push_back(text[i++]);
    }
    bool negative = false;
    if (begin > 0 && text[begin - 1] == '-') {
      std::size_t k = begin - 1;
      char prev = k > 0 ? text[k - 1] : ' ';
      bool operand_before = std::isalnum(static_cast<unsigned char>(prev)) || prev == ')' || prev == '_' ||
                            prev == '.' || prev == ']' || prev == '}';
      if (!operand_before) {
        negative = true;
        begin = k;
      }
    }
    std::string lexeme = (negative ? "-" : "") + digits + (integer ? "" : "." + frac);
    out.push_back(Numeral{*parse_decimal(lexeme), integer, begin, i});
  }
  return out;
}

// Integer literals of a question in order, duplicates kept.
inline std::vector<Integer> extract_number_list(std::string_view question_text) {
  std::vector<Integer> out;
  for (const auto& n : scan_numerals(detail::normalize_markup(question_text)))
    if (n.integer) out.push_back(boost::multiprecision::numerator(n.value));
  return out;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Contents of the last \boxed{...}, braces balanced.
inline std::optional<std::string> last_boxed(std::string_view text) {
  std::size_t at = text.rfind("\\boxed{");
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t i = at + 7;
  int depth = 1;
  std::size_t start = i;
  for (; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(start, i - start));
  }
  return std::nullopt;
}

}  // namespace detail

// Final numeric answer of a model response: the last \boxed{} value, else the
// first numeral after the last explicit answer marker, else the last numeral.
inline std::optional<Rational> extract_final_answer(std::string_view response_text) {
  std::string text = detail::normalize_markup(response_text);
  if (auto boxed = detail::last_boxed(text)) {
    auto nums = scan_numerals(*boxed);
    if (!nums.empty()) return nums.back().value;
  }
  std::string low = detail::lower(text);
  static constexpr std::string_view kMarkers[] = {"the answer is", "final answer", "answer:", "####"};
  std::size_t best = std::string::npos;
  std::size_t best_len = 0;
  for (auto m : kMarkers) {
    std::size_t at = low.rfind(m);
    if (at != std::string::npos && (best == std::string::npos || at > best)) {
      best = at;
      best_len = m.size();
    }
  }
  if (best != std::string::npos) {
    std::string_view tail = std::string_view(text).substr(best + best_len);
    std::size_t line_end = tail.find('\n');
    // The marker's own line first, then the next non-empty line.
    auto nums = scan_numerals(tail.substr(0, line_end));
    if (nums.empty() && line_end != std::string_view::npos) {
      std::string_view rest = tail.substr(line_end + 1);
      std::size_t next_end = rest.find('\n');
      nums = scan_numerals(rest.substr(0, next_end));
    }
    if (!nums.empty()) return nums.front().value;
  }
  auto nums = scan_numerals(text);
  if (nums.empty()) return std::nullopt;
  return nums.back().value;
}

inline std::string format_number_list(const std::vector<Integer>& numbers) {
  std::string s = "[";
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (i) s += ", ";
    s += numbers[i].str();
  }
  return s + "]";
}

}  // namespace gsmr
