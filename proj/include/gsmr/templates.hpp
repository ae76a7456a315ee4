#pragma once

// Problem templates: question text with numbered slots plus an integer
// straight-line answer program. See docs/template-format.md for the file format.

#include "gsmr/expr.hpp"
#include "gsmr/hashing.hpp"
#include "gsmr/numeric.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace gsmr {

enum class SlotRole { Scaled, Held, Fixed };

inline std::string_view to_string(SlotRole r) {
  switch (r) {
    case SlotRole::Scaled: return "scaled";
    case SlotRole::Held: return "held";
    case SlotRole::Fixed: return "fixed";
  }
  return "?";
}

inline std::optional<SlotRole> parse_slot_role(std::string_view s) {
  if (s == "scaled") return SlotRole::Scaled;
  if (s == "held") return SlotRole::Held;
  if (s == "fixed") return SlotRole::Fixed;
  return std::nullopt;
}

struct Slot {
  std::size_t index = 0;
  Integer original_value;
  SlotRole role = SlotRole::Scaled;
};

struct Step {
  std::string name;
  expr::NodePtr expression;
};

struct AnswerProgram {
  std::vector<Step> steps;
  std::string result_ref;
};

struct SlotRef {
  std::size_t index;
  friend bool operator==(const SlotRef&, const SlotRef&) = default;
};
using Segment = std::variant<std::string, SlotRef>;

struct ProblemTemplate {
  std::string id;
  std::vector<Segment> segments;
  std::vector<Slot> slots;
  AnswerProgram answer_program;
  std::optional<std::string> base_source;

  std::vector<Integer> original_values() const {
    std::vector<Integer> v;
    v.reserve(slots.size());
    for (const auto& s : slots) v.push_back(s.original_value);
    return v;
  }
};

struct EvaluationTrace {
  Integer final;
  std::vector<std::pair<std::string, Integer>> intermediates;
};

struct TemplateError : std::runtime_error {
  TemplateError(std::string source, std::size_t line, std::size_t column, const std::string& msg)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                           ": " + msg),
        source(std::move(source)),
        line(line),
        column(column),
        message(msg) {}
  std::string source;
  std::size_t line;
  std::size_t column;
  std::string message;
};

struct MissingSlotValue : std::invalid_argument {
  explicit MissingSlotValue(std::size_t index)
      : std::invalid_argument("missing value for slot " + std::to_string(index)) {}
};

// "s12" -> 12
inline std::optional<std::size_t> slot_index_of(std::string_view name) {
  if (name.size() < 2 || name[0] != 's') return std::nullopt;
  std::size_t v = 0;
  for (char c : name.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  if (name.size() > 2 && name[1] == '0') return std::nullopt;
  return v;
}

inline std::string slot_name(std::size_t index) { return "s" + std::to_string(index); }

inline constexpr expr::Grammar kTemplateGrammar{};

inline EvaluationTrace evaluate_program(const AnswerProgram& program, std::span<const Integer> values) {
  std::map<std::string, Integer, std::less<>> env;
  EvaluationTrace trace;
  auto lookup = [&](const std::string& name) -> Integer {
    if (auto idx = slot_index_of(name)) {
      if (*idx >= values.size()) throw MissingSlotValue(*idx);
      return values[*idx];
    }
    auto it = env.find(name);
    if (it == env.end()) throw std::invalid_argument("unbound name " + name);
    return it->second;
  };
  for (const auto& step : program.steps) {
    Integer v = expr::evaluate<Integer>(step.expression, lookup);
    env[step.name] = v;
    trace.intermediates.emplace_back(step.name, v);
  }
  trace.final = env.at(program.result_ref);
  return trace;
}

struct RenderOptions {
  bool thousands_separator = false;
};

inline std::string group_thousands(const std::string& digits) {
  std::string out;
  std::size_t lead = digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (i - lead) % 3 == 0 && i >= lead) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

inline std::string render_question(const ProblemTemplate& t, std::span<const Integer> values,
                                   RenderOptions opts = {}) {
  std::string out;
  for (const auto& seg : t.segments) {
    if (const auto* lit = std::get_if<std::string>(&seg)) {
      out += *lit;
    } else {
      std::size_t idx = std::get<SlotRef>(seg).index;
      if (idx >= values.size()) throw MissingSlotValue(idx);
      std::string digits = values[idx].str();
      out += opts.thousands_separator ? group_thousands(digits) : digits;
    }
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

class TemplateParser {
 public:
  TemplateParser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  ProblemTemplate parse() {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text_.size()) {
      std::size_t end = text_.find('\n', start);
      if (end == std::string_view::npos) end = text_.size();
      ++line_no;
      parse_line(text_.substr(start, end - start), line_no);
      if (end == text_.size()) break;
      start = end + 1;
    }
    return finish();
  }

 private:
  [[noreturn]] void fail(std::size_t line, std::size_t col, const std::string& msg) const {
    throw TemplateError(source_, line, col, msg);
  }

  void parse_line(std::string_view raw, std::size_t line) {
    std::string_view l = raw;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    std::size_t indent = l.find_first_not_of(" \t");
    if (indent == std::string_view::npos || l[indent] == '#') return;
    std::string_view body = l.substr(indent);
    std::size_t col0 = indent + 1;

    auto keyword = [&](std::string_view kw) {
      return body.starts_with(kw) && body.size() > kw.size() &&
             (body[kw.size()] == ' ' || body[kw.size()] == '\t');
    };

    if (body.starts_with("id:")) {
      set_once(id_, trim(body.substr(3)), line, col0, "id");
      if (id_->find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_-") != std::string::npos)
        fail(line, col0, "invalid template id '" + *id_ + "'");
    } else if (body.starts_with("source:")) {
      set_once(source_field_, trim(body.substr(7)), line, col0, "source");
    } else if (body.starts_with("question:")) {
      std::string_view q = body.substr(9);
      if (!q.empty() && q[0] == ' ') q.remove_prefix(1);
      if (question_line_) fail(line, col0, "duplicate question");
      question_line_ = line;
      parse_question(q, line, col0 + (body.size() - q.size()));
    } else if (body.starts_with("answer:")) {
      set_once(answer_, trim(body.substr(7)), line, col0, "answer");
      answer_line_ = line;
    } else if (keyword("slot")) {
      parse_slot(body.substr(5), line, col0 + 5);
    } else if (keyword("step")) {
      parse_step(body.substr(5), line, col0 + 5);
    } else {
      fail(line, col0, "unrecognized directive");
    }
  }

  void set_once(std::optional<std::string>& field, std::string value, std::size_t line,
                std::size_t col, const char* what) {
    if (field) fail(line, col, std::string("duplicate ") + what);
    if (value.empty()) fail(line, col, std::string("empty ") + what);
    field = std::move(value);
  }

  void parse_question(std::string_view q, std::size_t line, std::size_t col0) {
    std::string literal;
    for (std::size_t i = 0; i < q.size(); ++i) {
      char c = q[i];
      if (c == '{' && i + 1 < q.size() && q[i + 1] == '{') {
        literal.push_back('{');
        ++i;
      } else if (c == '}' && i + 1 < q.size() && q[i + 1] == '}') {
        literal.push_back('}');
        ++i;
      } else if (c == '{') {
        std::size_t close = q.find('}', i);
        if (close == std::string_view::npos) fail(line, col0 + i, "unterminated slot marker");
        std::string_view digits = q.substr(i + 1, close - i - 1);
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos)
          fail(line, col0 + i, "malformed slot marker");
        if (!literal.empty()) segments_.emplace_back(std::move(literal));
        literal.clear();
        std::size_t idx = std::stoul(std::string(digits));
        segments_.emplace_back(SlotRef{idx});
        marker_cols_.push_back({idx, col0 + i});
        i = close;
      } else if (c == '}') {
        fail(line, col0 + i, "unmatched '}'");
      } else {
        literal.push_back(c);
      }
    }
    if (!literal.empty()) segments_.emplace_back(std::move(literal));
  }

  // slot s<k> = <value> <role>
  void parse_slot(std::string_view rest, std::size_t line, std::size_t col0) {
    std::istringstream in{std::string(rest)};
    std::string name, eq, value, role, extra;
    in >> name >> eq >> value >> role;
    if (role.empty() || eq != "=" || (in >> extra))
      fail(line, col0, "expected 'slot s<k> = <value> <scaled|held|fixed>'");
    auto idx = slot_index_of(name);
    if (!idx) fail(line, col0, "invalid slot name '" + name + "'");
    if (value.find_first_not_of("0123456789") != std::string::npos)
      fail(line, col0, "slot value must be a non-negative integer");
    auto r = parse_slot_role(role);
    if (!r) fail(line, col0, "unknown slot role '" + role + "'");
    for (const auto& s : slots_)
      if (s.index == *idx) fail(line, col0, "duplicate slot " + name);
    slots_.push_back(Slot{*idx, Integer(value), *r});
    slot_lines_[*idx] = line;
  }

  // step <name> := <expr>
  void parse_step(std::string_view rest, std::size_t line, std::size_t col0) {
    std::size_t assign = rest.find(":=");
    if (assign == std::string_view::npos) fail(line, col0, "expected ':='");
    std::string name = trim(rest.substr(0, assign));
    if (!is_identifier(name)) fail(line, col0, "invalid step name '" + name + "'");
    if (slot_index_of(name)) fail(line, col0, "step name '" + name + "' shadows a slot");
    for (const auto& s : steps_)
      if (s.name == name) fail(line, col0, "duplicate step '" + name + "'");
    std::string_view rhs = rest.substr(assign + 2);
    std::size_t rhs_col = col0 + assign + 2;
    expr::NodePtr e;
    try {
      e = expr::parse(rhs, kTemplateGrammar);
    } catch (const expr::ParseError& err) {
      fail(line, rhs_col + err.column - 1, err.what());
    }
    expr::for_each_variable(e, [&](const std::string& v) {
      if (auto idx = slot_index_of(v)) {
        step_slot_refs_.push_back({*idx, line});
        return;
      }
      bool known = std::any_of(steps_.begin(), steps_.end(), [&](const Step& s) { return s.name == v; });
      if (!known) fail(line, rhs_col, "reference to undefined step '" + v + "'");
    });
    steps_.push_back(Step{std::move(name), std::move(e)});
  }

  ProblemTemplate finish() {
    std::size_t last = 1;
    if (!id_) fail(last, 1, "missing 'id:'");
    if (!question_line_) fail(last, 1, "missing 'question:'");
    if (steps_.empty()) fail(last, 1, "answer program has no steps");
    if (!answer_) fail(last, 1, "missing 'answer:'");

    std::sort(slots_.begin(), slots_.end(), [](const Slot& a, const Slot& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].index != i)
        fail(slot_lines_[slots_[i].index], 1, "slot indices must be contiguous from s0");

    std::vector<bool> used(slots_.size(), false);
    for (auto [idx, col] : marker_cols_) {
      if (idx >= slots_.size())
        fail(*question_line_, col, "dangling slot reference {" + std::to_string(idx) + "}");
      used[idx] = true;
    }
    for (auto [idx, line] : step_slot_refs_)
      if (idx >= slots_.size()) fail(line, 1, "dangling slot reference " + slot_name(idx));
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i]) fail(slot_lines_[i], 1, "slot " + slot_name(i) + " never appears in the question");

    bool answer_known =
        std::any_of(steps_.begin(), steps_.end(), [&](const Step& s) { return s.name == *answer_; });
    if (!answer_known) fail(*answer_line_, 1, "answer names unknown step '" + *answer_ + "'");

    ProblemTemplate t;
    t.id = *id_;
    t.segments = std::move(segments_);
    t.slots = std::move(slots_);
    t.answer_program = AnswerProgram{std::move(steps_), *answer_};
    t.base_source = source_field_;

    auto trace = evaluate_program(t.answer_program, t.original_values());
    for (const auto& [name, v] : trace.intermediates)
      if (v < 0) fail(*answer_line_, 1, "original values give negative step '" + name + "'");
    return t;
  }

  std::string_view text_;
  std::string source_;
  std::optional<std::string> id_, source_field_, answer_;
  std::optional<std::size_t> question_line_, answer_line_;
  std::vector<Segment> segments_;
  std::vector<std::pair<std::size_t, std::size_t>> marker_cols_;
  std::vector<std::pair<std::size_t, std::size_t>> step_slot_refs_;
  std::vector<Slot> slots_;
  std::map<std::size_t, std::size_t> slot_lines_;
  std::vector<Step> steps_;
};

}  // namespace detail

inline ProblemTemplate parse_template(std::string_view source_text, std::string source_name = "<template>") {
  return detail::TemplateParser(source_text, std::move(source_name)).parse();
}

inline std::string serialize_template(const ProblemTemplate& t) {
  std::string out;
  out += "id: " + t.id + "\n";
  if (t.base_source) out += "source: " + *t.base_source + "\n";
  out += "question: ";
  for (const auto& seg : t.segments) {
    if (const auto* lit = std::get_if<std::string>(&seg)) {
      for (char c : *lit) {
        if (c == '{' || c == '}') out.push_back(c);
        out.push_back(c);
      }
    } else {
      out += "{" + std::to_string(std::get<SlotRef>(seg).index) + "}";
    }
  }
  out += "\n";
  for (const auto& s : t.slots)
    out += "slot " + slot_name(s.index) + " = " + s.original_value.str() + " " +
           std::string(to_string(s.role)) + "\n";
  for (const auto& st : t.answer_program.steps)
    out += "step " + st.name + " := " + expr::to_string(st.expression) + "\n";
  out += "answer: " + t.answer_program.result_ref + "\n";
  return out;
}

inline bool structurally_equal(const ProblemTemplate& a, const ProblemTemplate& b) {
  if (a.id != b.id || a.base_source != b.base_source || a.segments != b.segments) return false;
  if (a.slots.size() != b.slots.size()) return false;
  for (std::size_t i = 0; i < a.slots.size(); ++i)
    if (a.slots[i].index != b.slots[i].index || a.slots[i].original_value != b.slots[i].original_value ||
        a.slots[i].role != b.slots[i].role)
      return false;
  const auto& pa = a.answer_program;
  const auto& pb = b.answer_program;
  if (pa.result_ref != pb.result_ref || pa.steps.size() != pb.steps.size()) return false;
  for (std::size_t i = 0; i < pa.steps.size(); ++i)
    if (pa.steps[i].name != pb.steps[i].name ||
        !expr::structurally_equal(pa.steps[i].expression, pb.steps[i].expression))
      return false;
  return true;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Corpus {
  std::vector<ProblemTemplate> templates;  // sorted by id
  std::string hash;                        // sha256 over canonical forms

  const ProblemTemplate* find(std::string_view id) const {
    for (const auto& t : templates)
      if (t.id == id) return &t;
    return nullptr;
  }
};

inline std::string corpus_hash(std::span<const ProblemTemplate> templates) {
  Sha256 h;
  for (const auto& t : templates) h.field(serialize_template(t));
  return to_hex(h.finish());
}

inline Corpus make_corpus(std::vector<ProblemTemplate> templates) {
  std::sort(templates.begin(), templates.end(),
            [](const ProblemTemplate& a, const ProblemTemplate& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < templates.size(); ++i)
    if (templates[i].id == templates[i - 1].id)
      throw std::runtime_error("duplicate template id '" + templates[i].id + "'");
  Corpus c;
  c.hash = corpus_hash(templates);
  c.templates = std::move(templates);
  return c;
}

// Loads every *.tmpl file in `dir`.
inline Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tmpl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ProblemTemplate> templates;
  for (const auto& f : files) templates.push_back(parse_template(read_file(f), f.string()));
  if (templates.empty()) throw std::runtime_error("no .tmpl files in " + dir.string());
  return make_corpus(std::move(templates));
}

}  // namespace gsmr
