#pragma once

// Exact numeric types shared by every module.

#include <boost/multiprecision/cpp_int.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gsmr {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline std::string to_string(const Integer& v) { return v.str(); }

// Canonical text: "42", "-7", "7/2".
inline std::string to_string(const Rational& v) {
  const Integer& num = boost::multiprecision::numerator(v);
  const Integer& den = boost::multiprecision::denominator(v);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

inline bool is_integer(const Rational& v) {
  return boost::multiprecision::denominator(v) == 1;
}

// Number of decimal digits in |v|; zero has one digit.
inline int digit_count(const Integer& v) {
  Integer a = v < 0 ? Integer(-v) : v;
  int n = 1;
  while (a >= 10) {
    a /= 10;
    ++n;
  }
  return n;
}

inline Integer pow10(int k) {
  Integer r = 1;
  for (int i = 0; i < k; ++i) r *= 10;
  return r;
}

// Parses "123", "-4", "1_000", "2.50", "1e6", "1.5E-3" exactly.
// Returns nullopt on anything else.
inline std::optional<Rational> parse_decimal(std::string_view text) {
  std::string digits;
  bool negative = false;
  std::size_t i = 0;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
    negative = text[i] == '-';
    ++i;
  }
  int frac_digits = 0;
  bool seen_dot = false;
  bool any_digit = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c >= '0' && c <= '9') {
      digits.push_back(c);
      any_digit = true;
      if (seen_dot) ++frac_digits;
    } else if (c == '_' && any_digit && i + 1 < text.size() &&
               text[i + 1] >= '0' && text[i + 1] <= '9') {
      continue;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
  }
  if (!any_digit) return std::nullopt;
  long exponent = 0;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    bool exp_neg = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
      exp_neg = text[i] == '-';
      ++i;
    }
    if (i >= text.size()) return std::nullopt;
    for (; i < text.size(); ++i) {
      char c = text[i];
      if (c < '0' || c > '9') return std::nullopt;
      exponent = exponent * 10 + (c - '0');
      if (exponent > 4000) return std::nullopt;
    }
    if (exp_neg) exponent = -exponent;
  }
  if (i != text.size()) return std::nullopt;
  Integer mantissa(digits);
  long scale = exponent - frac_digits;
  Rational r = scale >= 0 ? Rational(mantissa * pow10(static_cast<int>(scale)))
                          : Rational(mantissa, pow10(static_cast<int>(-scale)));
  return negative ? Rational(-r) : r;
}

// Parses canonical text ("42", "-7", "7/2") or any decimal literal.
inline std::optional<Rational> parse_rational(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_decimal(text);
  auto num = parse_decimal(text.substr(0, slash));
  auto den = parse_decimal(text.substr(slash + 1));
  if (!num || !den || *den == 0 || !is_integer(*num) || !is_integer(*den))
    return std::nullopt;
  return Rational(*num / *den);
}

inline Integer round_half_away(const Rational& v) {
  const Integer& num = boost::multiprecision::numerator(v);
  const Integer& den = boost::multiprecision::denominator(v);
  Integer twice = 2 * (num < 0 ? Integer(-num) : num) + den;
  Integer q = twice / (2 * den);
  return num < 0 ? Integer(-q) : q;
}

// Absolute distance below which a value is treated as the nearest integer.
inline const Rational& integer_tolerance() {
  static const Rational tol(1, 1000000);
  return tol;
}

// Integer the value represents under the 1e-6 tolerance rule, if any.
inline std::optional<Integer> as_near_integer(const Rational& v) {
  Integer r = round_half_away(v);
  Rational diff = v - Rational(r);
  if (diff < 0) diff = -diff;
  if (diff < integer_tolerance()) return r;
  return std::nullopt;
}

inline bool answers_match(const Rational& candidate, const Integer& truth) {
  auto n = as_near_integer(candidate);
  return n && *n == truth;
}

inline Rational from_double(double d) {
  // Shortest round-trip text keeps 0.1 as 1/10 rather than its binary expansion.
  auto r = parse_decimal(nlohmann::json(d).dump());
  if (!r) throw std::invalid_argument("non-finite number");
  return *r;
}

// JSON encoding: integers within int64 as numbers, everything else as
// canonical strings so no precision is lost.
inline nlohmann::json to_json_number(const Integer& v) {
  if (v >= std::numeric_limits<std::int64_t>::min() &&
      v <= std::numeric_limits<std::int64_t>::max())
    return static_cast<std::int64_t>(v);
  return v.str();
}

inline nlohmann::json to_json_number(const Rational& v) {
  if (is_integer(v)) return to_json_number(Integer(boost::multiprecision::numerator(v)));
  return to_string(v);
}

inline Rational rational_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) {
    if (j.is_number_unsigned()) return Rational(Integer(j.get<std::uint64_t>()));
    return Rational(Integer(j.get<std::int64_t>()));
  }
  if (j.is_number_float()) return from_double(j.get<double>());
  if (j.is_string()) {
    auto r = parse_rational(j.get<std::string>());
    if (r) return *r;
  }
  throw std::invalid_argument("not a number: " + j.dump());
}

inline Integer integer_from_json(const nlohmann::json& j) {
  Rational r = rational_from_json(j);
  if (!is_integer(r)) throw std::invalid_argument("not an integer: " + j.dump());
  return boost::multiprecision::numerator(r);
}

}  // namespace gsmr
