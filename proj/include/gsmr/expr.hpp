#pragma once

// Arithmetic expression trees and a small precedence-climbing parser shared by
// template answer programs and judge-emitted solver code.

#include "gsmr/numeric.hpp"

#include <cctype>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gsmr::expr {

enum class Op { Add, Sub, Mul, Div };

inline char op_symbol(Op op) {
  switch (op) {
    case Op::Add: return '+';
    case Op::Sub: return '-';
    case Op::Mul: return '*';
    case Op::Div: return '/';
  }
  return '?';
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Literal {
  Rational value;
  std::string text;  // spelling in the source, used for round-trips
};
struct Variable {
  std::string name;
};
struct Negate {
  NodePtr operand;
};
struct Binary {
  Op op;
  NodePtr lhs;
  NodePtr rhs;
};

struct Node {
  std::variant<Literal, Variable, Negate, Binary> value;
};

inline NodePtr make_literal(Rational v, std::string text = {}) {
  if (text.empty()) text = to_string(v);
  return std::make_shared<const Node>(Node{Literal{std::move(v), std::move(text)}});
}
inline NodePtr make_variable(std::string name) {
  return std::make_shared<const Node>(Node{Variable{std::move(name)}});
}
inline NodePtr make_negate(NodePtr operand) {
  return std::make_shared<const Node>(Node{Negate{std::move(operand)}});
}
inline NodePtr make_binary(Op op, NodePtr lhs, NodePtr rhs) {
  return std::make_shared<const Node>(Node{Binary{op, std::move(lhs), std::move(rhs)}});
}

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t column)
      : std::runtime_error(what), column(column) {}
  std::size_t column;  // 1-based within the parsed text
};

struct Grammar {
  bool allow_division = false;
  bool allow_decimal = false;  // fractional and exponent literals
  bool allow_unary = false;
  bool allow_unicode_ops = false;  // × · ÷ − as produced by chat models
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, Grammar grammar) : text_(text), g_(grammar) {}

  NodePtr parse_all() {
    NodePtr n = parse_sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_ + 1); }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool consume(std::string_view tok) {
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  // Peeks a binary operator at the cursor without consuming it.
  std::optional<std::pair<Op, std::size_t>> peek_op() {
    skip_space();
    if (pos_ >= text_.size()) return std::nullopt;
    std::string_view rest = text_.substr(pos_);
    if (rest.starts_with("**")) fail("operator '**' not allowed");
    if (rest.starts_with("//")) fail("operator '//' not allowed");
    switch (rest[0]) {
      case '+': return std::pair{Op::Add, std::size_t{1}};
      case '-': return std::pair{Op::Sub, std::size_t{1}};
      case '*': return std::pair{Op::Mul, std::size_t{1}};
      case '/':
        if (!g_.allow_division) fail("division not allowed");
        return std::pair{Op::Div, std::size_t{1}};
      case '%': fail("operator '%' not allowed");
      default: break;
    }
    if (g_.allow_unicode_ops) {
      if (rest.starts_with("×")) return std::pair{Op::Mul, std::size_t{2}};
      if (rest.starts_with("·")) return std::pair{Op::Mul, std::size_t{2}};
      if (rest.starts_with("−")) return std::pair{Op::Sub, std::size_t{3}};
      if (rest.starts_with("÷")) {
        if (!g_.allow_division) fail("division not allowed");
        return std::pair{Op::Div, std::size_t{2}};
      }
    }
    return std::nullopt;
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    for (;;) {
      auto op = peek_op();
      if (!op || (op->first != Op::Add && op->first != Op::Sub)) return lhs;
      pos_ += op->second;
      lhs = make_binary(op->first, lhs, parse_product());
    }
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_unary();
    for (;;) {
      auto op = peek_op();
      if (!op || (op->first != Op::Mul && op->first != Op::Div)) return lhs;
      pos_ += op->second;
      lhs = make_binary(op->first, lhs, parse_unary());
    }
  }

  NodePtr parse_unary() {
    skip_space();
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
      if (!g_.allow_unary) fail("unary sign not allowed");
      bool neg = text_[pos_] == '-';
      ++pos_;
      NodePtr operand = parse_unary();
      return neg ? make_negate(operand) : operand;
    }
    if (g_.allow_unicode_ops && g_.allow_unary && consume("−")) {
      return make_negate(parse_unary());
    }
    return parse_primary();
  }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_sum();
      skip_space();
      if (!consume(")")) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '(') fail("function call '" + name + "' not allowed");
      if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == '['))
        fail("attribute or index access not allowed");
      return make_variable(std::move(name));
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    auto is_digit = [&](std::size_t i) {
      return i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]));
    };
    while (is_digit(pos_) || (pos_ < text_.size() && text_[pos_] == '_' && is_digit(pos_ + 1)))
      ++pos_;
    bool decimal = false;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      decimal = true;
      ++pos_;
      while (is_digit(pos_)) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (is_digit(pos_)) {
        decimal = true;
        while (is_digit(pos_)) ++pos_;
      } else {
        pos_ = save;
      }
    }
    std::string_view lexeme = text_.substr(start, pos_ - start);
    if (decimal && !g_.allow_decimal) {
      pos_ = start;
      fail("non-integer constant '" + std::string(lexeme) + "'");
    }
    if (pos_ < text_.size() &&
        (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      fail("malformed number");
    auto value = parse_decimal(lexeme);
    if (!value) {
      pos_ = start;
      fail("malformed number '" + std::string(lexeme) + "'");
    }
    return make_literal(*value, std::string(lexeme));
  }

  std::string_view text_;
  Grammar g_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline NodePtr parse(std::string_view text, Grammar grammar) {
  return detail::Parser(text, grammar).parse_all();
}

inline void for_each_variable(const NodePtr& n, const std::function<void(const std::string&)>& fn) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Variable>) {
          fn(v.name);
        } else if constexpr (std::is_same_v<T, Negate>) {
          for_each_variable(v.operand, fn);
        } else if constexpr (std::is_same_v<T, Binary>) {
          for_each_variable(v.lhs, fn);
          for_each_variable(v.rhs, fn);
        }
      },
      n->value);
}

struct DivisionByZero : std::runtime_error {
  DivisionByZero() : std::runtime_error("division by zero") {}
};

// Lookup must return the bound value for a name or throw.
template <typename Number, typename Lookup>
Number evaluate(const NodePtr& n, const Lookup& lookup) {
  return std::visit(
      [&](const auto& v) -> Number {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Literal>) {
          if constexpr (std::is_same_v<Number, Integer>) {
            return boost::multiprecision::numerator(v.value);
          } else {
            return v.value;
          }
        } else if constexpr (std::is_same_v<T, Variable>) {
          return lookup(v.name);
        } else if constexpr (std::is_same_v<T, Negate>) {
          return -evaluate<Number>(v.operand, lookup);
        } else {
          Number a = evaluate<Number>(v.lhs, lookup);
          Number b = evaluate<Number>(v.rhs, lookup);
          switch (v.op) {
            case Op::Add: return a + b;
            case Op::Sub: return a - b;
            case Op::Mul: return a * b;
            case Op::Div:
              if (b == 0) throw DivisionByZero();
              return a / b;
          }
          return a;
        }
      },
      n->value);
}

namespace detail {
inline int precedence(const Node& n) {
  if (auto* b = std::get_if<Binary>(&n.value))
    return (b->op == Op::Add || b->op == Op::Sub) ? 1 : 2;
  if (std::holds_alternative<Negate>(n.value)) return 3;
  return 4;
}
}  // namespace detail

// Minimal parenthesization; parse(to_string(e)) is structurally equal to e.
// `rename` maps variable names for display (e.g. slot ids to values).
inline std::string to_string(const NodePtr& n,
                             const std::function<std::string(const std::string&)>& rename = {}) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Literal>) {
          return v.text;
        } else if constexpr (std::is_same_v<T, Variable>) {
          return rename ? rename(v.name) : v.name;
        } else if constexpr (std::is_same_v<T, Negate>) {
          std::string inner = to_string(v.operand, rename);
          if (detail::precedence(*v.operand) < 3) inner = "(" + inner + ")";
          return "-" + inner;
        } else {
          int p = detail::precedence(*n);
          std::string l = to_string(v.lhs, rename);
          std::string r = to_string(v.rhs, rename);
          if (detail::precedence(*v.lhs) < p) l = "(" + l + ")";
          // Left-associative operators need parentheses on an equal-precedence rhs.
          if (detail::precedence(*v.rhs) <= p) r = "(" + r + ")";
          return l + " " + op_symbol(v.op) + " " + r;
        }
      },
      n->value);
}

inline bool structurally_equal(const NodePtr& a, const NodePtr& b) {
  if (a->value.index() != b->value.index()) return false;
  return std::visit(
      [&](const auto& va) -> bool {
        using T = std::decay_t<decltype(va)>;
        const auto& vb = std::get<T>(b->value);
        if constexpr (std::is_same_v<T, Literal>) {
          return va.value == vb.value;
        } else if constexpr (std::is_same_v<T, Variable>) {
          return va.name == vb.name;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return structurally_equal(va.operand, vb.operand);
        } else {
          return va.op == vb.op && structurally_equal(va.lhs, vb.lhs) &&
                 structurally_equal(va.rhs, vb.rhs);
        }
      },
      a->value);
}

}  // namespace gsmr::expr
