#pragma once

// Built-in interpreter for the straight-line subset of judge-emitted Python:
//
//   def solver():
//       name = <expr>          # also +=, -=, *=, /=
//       return <expr>
//
// over numeric literals, earlier names, + - * / and parentheses. Anything else
// is reported as OutsideSubset so the caller can route it to the guest executor.

#include "gsmr/expr.hpp"
#include "gsmr/numeric.hpp"

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gsmr {

struct SolverStatement {
  std::optional<std::string> target;  // empty for the final return
  expr::NodePtr value;
};

struct SolverProgram {
  std::vector<SolverStatement> statements;  // last one is the return
};

struct OutsideSubset {
  std::string reason;
};

using ParsedSolver = std::variant<SolverProgram, OutsideSubset>;

inline constexpr expr::Grammar kSolverGrammar{
    .allow_division = true, .allow_decimal = true, .allow_unary = true, .allow_unicode_ops = false};

// Body of the first ```python fence, else of the first ``` fence, else the text itself.
inline std::string strip_code_fence(std::string_view text) {
  for (std::string_view open : {"```python", "```py", "```"}) {
    std::size_t at = text.find(open);
    if (at == std::string_view::npos) continue;
    std::size_t body = text.find('\n', at);
    if (body == std::string_view::npos) continue;
    std::size_t close = text.find("```", body + 1);
    return std::string(text.substr(body + 1, close == std::string_view::npos ? std::string_view::npos
                                                                              : close - body - 1));
  }
  return std::string(text);
}

namespace detail {

inline std::size_t indent_of(std::string_view line) {
  std::size_t n = 0;
  for (char c : line) {
    if (c == ' ') ++n;
    else if (c == '\t') n += 8 - n % 8;
    else break;
  }
  return n;
}

inline std::string rstrip(std::string_view s) {
  auto e = s.find_last_not_of(" \t\r");
  return e == std::string_view::npos ? std::string() : std::string(s.substr(0, e + 1));
}

inline std::string strip(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Removes a trailing comment; string literals are outside the subset, so a
// quote before the '#' makes the line unsupported rather than mis-stripped.
inline std::string drop_comment(std::string_view line) {
  auto hash = line.find('#');
  return std::string(hash == std::string_view::npos ? line : line.substr(0, hash));
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

}  // namespace detail

inline ParsedSolver parse_solver(std::string_view solver_code) {
  using namespace detail;
  std::string code = strip_code_fence(solver_code);
  auto lines = split_lines(code);

  static const std::regex def_re(R"(^(\s*)def\s+solver\s*\(\s*\)\s*(->\s*[A-Za-z_][\w\.]*\s*)?:(.*)$)");
  std::size_t def_line = lines.size();
  std::size_t def_indent = 0;
  std::string inline_body;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::smatch m;
    if (std::regex_match(lines[i], m, def_re)) {
      def_line = i;
      def_indent = indent_of(lines[i]);
      inline_body = strip(drop_comment(m[3].str()));
      break;
    }
  }
  if (def_line == lines.size()) return OutsideSubset{"no zero-argument solver() definition"};

  // Physical body lines.
  std::vector<std::string> body;
  if (!inline_body.empty()) {
    body.push_back(inline_body);
  } else {
    for (std::size_t i = def_line + 1; i < lines.size(); ++i) {
      std::string s = strip(lines[i]);
      if (s.empty() || s[0] == '#') continue;
      if (indent_of(lines[i]) <= def_indent) break;
      body.push_back(lines[i]);
    }
  }
  if (body.empty()) return OutsideSubset{"empty solver() body"};

  // Logical statements: docstrings dropped, bracket and backslash continuations
  // joined, ';' separated statements split.
  std::vector<std::string> statements;
  std::string pending;
  int depth = 0;
  std::optional<std::string> in_docstring;
  for (const auto& raw : body) {
    std::string s = strip(raw);
    if (in_docstring) {
      if (s.find(*in_docstring) != std::string::npos) in_docstring.reset();
      continue;
    }
    if (pending.empty() && (s.starts_with("\"\"\"") || s.starts_with("'''"))) {
      std::string q = s.substr(0, 3);
      if (s.size() < 6 || s.find(q, 3) == std::string::npos) in_docstring = q;
      continue;
    }
    std::string line = rstrip(drop_comment(s));
    bool backslash = !line.empty() && line.back() == '\\';
    if (backslash) line.pop_back();
    for (char c : line) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') --depth;
    }
    pending += (pending.empty() ? "" : " ") + line;
    if (depth > 0 || backslash) continue;
    std::size_t start = 0;
    for (;;) {
      std::size_t semi = pending.find(';', start);
      std::string part = strip(std::string_view(pending).substr(start, semi == std::string::npos ? semi : semi - start));
      if (!part.empty()) statements.push_back(part);
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
    pending.clear();
    depth = 0;
  }
  if (in_docstring) return OutsideSubset{"unterminated docstring"};
  if (!pending.empty()) return OutsideSubset{"unbalanced brackets"};

  static const std::regex assign_re(R"(^([A-Za-z_]\w*)\s*(\+=|-=|\*=|/=|=)(?!=)\s*(.+)$)");
  static const std::regex return_re(R"(^return(\s+(.+)|\((.*)\))$)");
  static const std::set<std::string, std::less<>> kReserved{
      "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else",
      "except", "False", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "None",
      "nonlocal", "not", "or", "pass", "raise", "return", "True", "try", "while", "with", "yield"};

  SolverProgram program;
  std::set<std::string, std::less<>> bound;
  auto check_refs = [&](const expr::NodePtr& e) -> std::optional<std::string> {
    std::optional<std::string> missing;
    expr::for_each_variable(e, [&](const std::string& name) {
      if (!missing && (!bound.count(name) || kReserved.count(name))) missing = name;
    });
    return missing;
  };

  for (std::size_t i = 0; i < statements.size(); ++i) {
    const std::string& st = statements[i];
    if (st == "pass") continue;
    std::smatch m;
    if (std::regex_match(st, m, return_re)) {
      if (i + 1 != statements.size()) return OutsideSubset{"statements after return"};
      std::string e = m[2].matched ? m[2].str() : "(" + m[3].str() + ")";
      expr::NodePtr node;
      try {
        node = expr::parse(e, kSolverGrammar);
      } catch (const expr::ParseError& err) {
        return OutsideSubset{std::string("return: ") + err.what()};
      }
      if (auto missing = check_refs(node)) return OutsideSubset{"undefined variable '" + *missing + "'"};
      program.statements.push_back({std::nullopt, node});
      return program;
    }
    if (std::regex_match(st, m, assign_re)) {
      std::string target = m[1].str();
      std::string op = m[2].str();
      if (kReserved.count(target)) return OutsideSubset{"unsupported statement: " + st};
      expr::NodePtr node;
      try {
        node = expr::parse(m[3].str(), kSolverGrammar);
      } catch (const expr::ParseError& err) {
        return OutsideSubset{"'" + st + "': " + err.what()};
      }
      if (auto missing = check_refs(node)) return OutsideSubset{"undefined variable '" + *missing + "'"};
      if (op != "=") {
        if (!bound.count(target)) return OutsideSubset{"undefined variable '" + target + "'"};
        expr::Op bop = op == "+=" ? expr::Op::Add : op == "-=" ? expr::Op::Sub : op == "*=" ? expr::Op::Mul : expr::Op::Div;
        node = expr::make_binary(bop, expr::make_variable(target), node);
      }
      bound.insert(target);
      program.statements.push_back({target, node});
      continue;
    }
    return OutsideSubset{"unsupported statement: " + st};
  }
  return OutsideSubset{"solver() has no return statement"};
}

// Exact rational execution. Throws expr::DivisionByZero.
inline Rational run_builtin(const SolverProgram& program) {
  std::map<std::string, Rational, std::less<>> env;
  auto lookup = [&](const std::string& name) -> Rational { return env.at(name); };
  for (const auto& st : program.statements) {
    Rational v = expr::evaluate<Rational>(st.value, lookup);
    if (!st.target) return v;
    env[*st.target] = std::move(v);
  }
  throw std::logic_error("solver program without return");
}

// Canonical Python rendering of a program in the subset.
inline std::string to_python(const SolverProgram& program) {
  std::string out = "def solver():\n";
  for (const auto& st : program.statements) {
    out += "    ";
    out += st.target ? *st.target + " = " : std::string("return ");
    out += expr::to_string(st.value) + "\n";
  }
  return out;
}

}  // namespace gsmr
