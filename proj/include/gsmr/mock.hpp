#pragma once

// Deterministic offline stand-ins for the target and judge models, and the
// labelled fixture corpus built from them.
//
// Mock responses show one line per answer-program step,
//
//   revenue = classes × 15 × 15 = 7425
//
// with earlier steps referenced by name and slot values written out, followed
// by "The answer is N.". Mutations act on those lines: an arithmetic slip
// changes a stated value, a copy error changes a written slot value, a logic
// error changes the step structure.

#include "gsmr/analysis.hpp"
#include "gsmr/hashing.hpp"
#include "gsmr/perturb.hpp"

#include <thread>

namespace gsmr {

enum class ResponseStyle { Correct, Arithmetic, NumberCopy, Logic };

inline std::string_view to_string(ResponseStyle s) {
  switch (s) {
    case ResponseStyle::Correct: return "correct";
    case ResponseStyle::Arithmetic: return "arithmetic";
    case ResponseStyle::NumberCopy: return "number_copy";
    case ResponseStyle::Logic: return "logic";
  }
  return "?";
}

inline Verdict expected_verdict(ResponseStyle s) {
  switch (s) {
    case ResponseStyle::Correct: return Verdict::Correct;
    case ResponseStyle::Arithmetic:
    case ResponseStyle::NumberCopy: return Verdict::NonLogicalError;
    case ResponseStyle::Logic: return Verdict::LogicalError;
  }
  return Verdict::Ungradable;
}

struct SynthesizedResponse {
  ResponseStyle style;
  std::string text;
  Rational stated_final;
  std::vector<CopyCorrection> copy_errors;  // (written, true)
  std::string mutation;                     // human-readable description
};

namespace mock_detail {

inline std::uint64_t hash64(std::initializer_list<std::string_view> fields) {
  Sha256 h;
  for (auto f : fields) h.field(f);
  auto d = h.finish();
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

inline double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0); }

inline bool is_slot(const std::string& name) { return slot_index_of(name).has_value(); }

// True when b is a one-character insertion, deletion or substitution of a.
inline bool edit_distance_one(std::string_view a, std::string_view b) {
  if (a == b) return false;
  if (a.size() > b.size()) std::swap(a, b);
  if (b.size() - a.size() > 1) return false;
  std::size_t i = 0;
  while (i < a.size() && a[i] == b[i]) ++i;
  if (a.size() == b.size()) return a.substr(i + 1) == b.substr(i + 1);
  return a.substr(i) == b.substr(i + 1);
}

// The unique list number a written literal was probably copied from.
inline std::optional<Integer> copy_source(const Integer& written, const std::set<Integer>& listed) {
  if (listed.count(written) || written < 1000) return std::nullopt;
  std::optional<Integer> found;
  std::string w = written.str();
  for (const auto& n : listed) {
    if (n < 1000 || !edit_distance_one(w, n.str())) continue;
    if (found) return std::nullopt;
    found = n;
  }
  return found;
}

struct Line {
  std::string name;
  expr::NodePtr expr;  // over slot names, constants and earlier step names
};

inline std::vector<Line> program_lines(const ProblemTemplate& t) {
  std::vector<Line> lines;
  for (const auto& s : t.answer_program.steps) lines.push_back({s.name, s.expression});
  return lines;
}

// Evaluates lines with slot values from `slot_text` (as written) and step
// values from `claimed` (as stated). `override_at` replaces one stated value.
inline std::vector<Rational> stated_values(const std::vector<Line>& lines, const std::vector<Integer>& written_slots,
                                           std::optional<std::pair<std::size_t, Rational>> override_at = {}) {
  std::vector<Rational> stated;
  std::map<std::string, Rational> env;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto lookup = [&](const std::string& n) -> Rational {
      if (auto k = slot_index_of(n)) return Rational(written_slots.at(*k));
      return env.at(n);
    };
    Rational v = expr::evaluate<Rational>(lines[i].expr, lookup);
    if (override_at && override_at->first == i) v = override_at->second;
    env[lines[i].name] = v;
    stated.push_back(v);
  }
  return stated;
}

inline std::string display(const expr::NodePtr& e, const std::vector<Integer>& written_slots) {
  std::string s = expr::to_string(e, [&](const std::string& n) {
    if (auto k = slot_index_of(n)) return written_slots.at(*k).str();
    return n;
  });
  std::string out;
  for (char c : s) {
    if (c == '*') out += "×";
    else out += c;
  }
  return out;
}

inline std::string render_response(const std::vector<Line>& lines, const std::vector<Integer>& written_slots,
                                   const std::vector<Rational>& stated) {
  std::string text = "Let's compute each quantity in turn.\n";
  for (std::size_t i = 0; i < lines.size(); ++i)
    text += lines[i].name + " = " + display(lines[i].expr, written_slots) + " = " + to_string(stated[i]) + "\n";
  text += "The answer is " + to_string(stated.back()) + ".";
  return text;
}

// Structural mutations of one expression, in a fixed order.
inline void mutations_of(const expr::NodePtr& e, std::size_t slot_count, std::vector<std::pair<expr::NodePtr, std::string>>& out,
                         const std::function<expr::NodePtr(expr::NodePtr)>& wrap) {
  using namespace expr;
  if (auto* b = std::get_if<Binary>(&e->value)) {
    Op swapped = b->op == Op::Add ? Op::Sub : b->op == Op::Sub ? Op::Add : Op::Add;
    out.push_back({wrap(make_binary(swapped, b->lhs, b->rhs)),
                   std::string("operator ") + op_symbol(b->op) + " replaced by " + op_symbol(swapped)});
    if (b->op == Op::Add || b->op == Op::Sub) {
      out.push_back({wrap(b->lhs), "dropped term " + to_string(b->rhs)});
      out.push_back({wrap(b->rhs), "dropped term " + to_string(b->lhs)});
    }
    if (b->op == Op::Mul) out.push_back({wrap(b->lhs), "dropped factor " + to_string(b->rhs)});
    mutations_of(b->lhs, slot_count, out, [&, b](NodePtr n) { return wrap(make_binary(b->op, n, b->rhs)); });
    mutations_of(b->rhs, slot_count, out, [&, b](NodePtr n) { return wrap(make_binary(b->op, b->lhs, n)); });
  } else if (auto* v = std::get_if<Variable>(&e->value)) {
    if (auto k = slot_index_of(v->name)) {
      for (std::size_t other = 0; other < slot_count; ++other)
        if (other != *k) out.push_back({wrap(make_variable(slot_name(other))), "used " + slot_name(other) + " for " + v->name});
    }
  }
}

inline std::string bump_digit(const Integer& v, std::uint64_t h) {
  std::string s = (v < 0 ? -v : v).str();
  // Avoid the leading digit so the digit count stays the same.
  std::size_t pos = s.size() == 1 ? 0 : 1 + h % (s.size() - 1);
  char c = s[pos];
  char repl = static_cast<char>('0' + ((c - '0') + 1 + (h >> 8) % 9) % 10);
  if (s.size() == 1 && repl == '0' && c != '0') repl = c == '9' ? '1' : static_cast<char>(c + 1);
  s[pos] = repl;
  return (v < 0 ? "-" : "") + s;
}

}  // namespace mock_detail

// Builds a response of the requested style, or nothing when the style cannot
// be realized on this instance (no multi-operand step, no four-digit slot,
// no structural change that alters the answer).
inline std::optional<SynthesizedResponse> synthesize_response(const ProblemTemplate& t, const GeneratedProblem& p,
                                                              ResponseStyle style, std::uint64_t salt) {
  using namespace mock_detail;
  auto lines = program_lines(t);
  const auto& slots = p.values;
  Rational truth(p.ground_truth);
  SynthesizedResponse out{style};
  auto finish = [&](const std::vector<Line>& ls, const std::vector<Integer>& written,
                    const std::vector<Rational>& stated) {
    out.text = render_response(ls, written, stated);
    out.stated_final = stated.back();
    return out;
  };

  switch (style) {
    case ResponseStyle::Correct:
      return finish(lines, slots, stated_values(lines, slots));

    case ResponseStyle::Arithmetic: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < lines.size(); ++i)
        if (std::holds_alternative<expr::Binary>(lines[i].expr->value)) candidates.push_back(i);
      auto correct = stated_values(lines, slots);
      for (std::size_t k = 0; k < candidates.size(); ++k) {
        std::size_t i = candidates[(salt + k) % candidates.size()];
        if (!is_integer(correct[i])) continue;
        for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
          auto wrong = *parse_rational(bump_digit(boost::multiprecision::numerator(correct[i]), salt * 31 + attempt));
          auto stated = stated_values(lines, slots, std::pair{i, wrong});
          if (stated.back() == truth) continue;
          out.mutation = lines[i].name + " stated as " + to_string(wrong) + " instead of " + to_string(correct[i]);
          return finish(lines, slots, stated);
        }
      }
      return std::nullopt;
    }

    case ResponseStyle::NumberCopy: {
      std::set<Integer> listed;
      for (auto& n : extract_number_list(p.question_text)) listed.insert(n);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        std::size_t s = (salt + k) % slots.size();
        if (slots[s] < 1000) continue;
        std::string digits = slots[s].str();
        for (std::size_t a = 0; a < digits.size(); ++a) {
          std::size_t pos = (salt / 7 + a) % digits.size();
          std::string copied = digits.substr(0, pos + 1) + digits.substr(pos);  // duplicated digit
          Integer written_value(copied);
          if (copy_source(written_value, listed) != slots[s]) continue;
          auto written = slots;
          written[s] = written_value;
          auto stated = stated_values(lines, written);
          if (stated.back() == truth) continue;
          out.copy_errors.push_back({written_value, slots[s]});
          out.mutation = slot_name(s) + " copied as " + copied;
          return finish(lines, written, stated);
        }
      }
      return std::nullopt;
    }

    case ResponseStyle::Logic: {
      std::vector<std::pair<std::size_t, std::pair<expr::NodePtr, std::string>>> all;
      for (std::size_t i = 0; i < lines.size(); ++i) {
        std::vector<std::pair<expr::NodePtr, std::string>> ms;
        mutations_of(lines[i].expr, slots.size(), ms, [](expr::NodePtr n) { return n; });
        for (auto& m : ms) all.push_back({i, std::move(m)});
      }
      for (std::size_t k = 0; k < all.size(); ++k) {
        auto& [i, m] = all[(salt + k) % all.size()];
        auto mutated = lines;
        mutated[i].expr = m.first;
        std::vector<Rational> stated;
        try {
          stated = stated_values(mutated, slots);
        } catch (const std::exception&) {
          continue;
        }
        if (stated.back() == truth || !is_integer(stated.back())) continue;
        out.mutation = lines[i].name + ": " + m.second;
        return finish(mutated, slots, stated);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// ---- mock judge ----

struct MockJudgeOptions {
  int malformed_replies = 0;  // leading malformed replies per distinct prompt
};

class MockJudge final : public ChatModel {
 public:
  explicit MockJudge(MockJudgeOptions options = {}) : options_(options) {}

  std::string model_name() const override { return "mock-judge"; }
  std::string fingerprint() const override { return "mock-judge@mock://judge"; }
  int calls() const { return calls_; }

  ChatResponse complete(const ChatRequest& request) override {
    ++calls_;
    const std::string& prompt = request.messages.at(0).content;
    if (options_.malformed_replies > 0) {
      std::lock_guard lock(m_);
      if (seen_[prompt]++ < options_.malformed_replies) return reply("Sure! Here is the code: def solver(): return");
    }
    if (prompt.starts_with(kJudgePromptHead)) return reply(translate(prompt));
    if (prompt.starts_with(kClaimsPromptHead)) return reply(claims(prompt));
    return reply("{}");
  }

  // Lines of the mock response format: name, expression text, stated value.
  struct ParsedLine {
    std::string name;
    std::string expression;
    std::string stated;
  };

  static std::vector<ParsedLine> parse_lines(std::string_view response) {
    static const std::regex line_re(R"(^\s*([A-Za-z_]\w*) = (.+) = (-?[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?)\s*$)");
    std::vector<ParsedLine> out;
    std::string text(response);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      std::smatch m;
      if (std::regex_match(line, m, line_re)) out.push_back({m[1], m[2], m[3]});
    }
    return out;
  }

 private:
  static ChatResponse reply(std::string content) {
    ChatResponse r;
    r.content = std::move(content);
    r.completion_tokens = r.content.size() / 4;
    return r;
  }

  static std::string translate(const std::string& prompt) {
    std::size_t list_at = kJudgePromptHead.size();
    std::size_t mid = prompt.find(kJudgePromptMiddle, list_at);
    std::string list_text = prompt.substr(list_at, mid - list_at);
    std::string response = prompt.substr(mid + kJudgePromptMiddle.size());
    if (response.ends_with(kJudgePromptTail)) response.resize(response.size() - kJudgePromptTail.size());

    std::set<Integer> listed;
    for (auto& n : extract_number_list(list_text)) listed.insert(n);

    auto lines = parse_lines(response);
    auto final_answer = extract_final_answer(response);
    std::string code = "def solver():\n";
    std::string explain;
    if (lines.empty()) {
      code += "    return " + (final_answer ? to_string(*final_answer) : std::string("0")) + "\n";
      explain = "The response states a final value without intermediate steps.";
    }
    for (const auto& l : lines) {
      std::string expr_text;
      std::string_view src = l.expression;
      for (std::size_t i = 0; i < src.size();) {
        if (src.substr(i).starts_with("×")) {
          expr_text += '*';
          i += 2;
        } else if (std::isdigit(static_cast<unsigned char>(src[i]))) {
          std::size_t j = i;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
          std::string digits(src.substr(i, j - i));
          if (auto fixed = mock_detail::copy_source(Integer(digits), listed)) {
            code += "    # corrected " + digits + " to " + fixed->str() + ": number copied incorrectly in the response\n";
            expr_text += fixed->str();
          } else {
            expr_text += digits;
          }
          i = j;
        } else {
          expr_text += src[i++];
        }
      }
      code += "    " + l.name + " = " + expr_text + "\n";
      explain += "The response computes " + l.name + " as " + l.expression + ". ";
    }
    if (!lines.empty()) code += "    return " + lines.back().name + "\n";
    nlohmann::json j{{"extracted_answer", final_answer ? to_string(*final_answer) : std::string()},
                     {"explain", explain},
                     {"python_code", "```python\n" + code + "```"}};
    return j.dump(4);
  }

  static std::string claims(const std::string& prompt) {
    std::size_t mid = prompt.find(kClaimsPromptMiddle);
    std::string response = mid == std::string::npos ? "" : prompt.substr(mid + kClaimsPromptMiddle.size());
    nlohmann::json c = nlohmann::json::object();
    for (const auto& l : parse_lines(response)) c[l.name] = l.stated;
    return nlohmann::json{{"claims", c}}.dump();
  }

  MockJudgeOptions options_;
  std::atomic<int> calls_{0};
  std::mutex m_;
  std::map<std::string, int> seen_;
};

// ---- mock target ----

struct MockTargetOptions {
  std::uint64_t seed = 0;
  std::chrono::milliseconds latency{0};
  double retest_error_rate = 0.2;
};

// Style probabilities grow with the level index (0 = baseline .. 6 = L6).
inline ResponseStyle pick_style(double u, int level_index) {
  double logic = 0.12 + 0.03 * level_index;
  double arithmetic = 0.02 + 0.04 * level_index;
  double copy = level_index >= 4 ? 0.02 * (level_index - 3) : 0.0;
  if (u < logic) return ResponseStyle::Logic;
  if (u < logic + arithmetic) return ResponseStyle::Arithmetic;
  if (u < logic + arithmetic + copy) return ResponseStyle::NumberCopy;
  return ResponseStyle::Correct;
}

class MockTarget final : public ChatModel {
 public:
  MockTarget(const Corpus& corpus, std::span<const GeneratedProblem> dataset, MockTargetOptions options = {})
      : options_(options) {
    for (const auto& p : dataset) {
      const auto* t = corpus.find(p.template_id);
      if (t) by_question_.emplace(p.question_text, std::pair{&p, t});
    }
  }

  std::string model_name() const override { return "mock-target"; }
  std::string fingerprint() const override { return "mock-target@mock://target?seed=" + std::to_string(options_.seed); }

  ChatResponse complete(const ChatRequest& request) override {
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    const std::string& prompt = request.messages.at(0).content;
    std::string text = respond(prompt, request.seed.value_or(0));
    ChatResponse r;
    r.completion_tokens = (text.size() + 3) / 4;
    r.content = std::move(text);
    r.latency_ms = static_cast<std::uint64_t>(options_.latency.count());
    return r;
  }

  std::optional<ResponseStyle> style_for(std::string_view question, std::uint64_t pass_seed) const {
    auto it = by_question_.find(std::string(question));
    if (it == by_question_.end()) return std::nullopt;
    double u = mock_detail::unit(
        mock_detail::hash64({"style", question, std::to_string(pass_seed), std::to_string(options_.seed)}));
    return pick_style(u, static_cast<int>(it->second.first->level));
  }

 private:
  std::string respond(const std::string& prompt, std::uint64_t pass_seed) const {
    static const std::string kHead =
        "As an expert problem solver, solve the following mathematical question step by step.\nQ: ";
    static const std::string kTail = "\nA: Let's think step by step.";
    if (prompt.starts_with(kHead) && prompt.ends_with(kTail)) {
      std::string question = prompt.substr(kHead.size(), prompt.size() - kHead.size() - kTail.size());
      auto it = by_question_.find(question);
      if (it == by_question_.end()) return "I could not follow this question. The answer is 0.";
      const auto& [problem, tmpl] = it->second;
      auto style = *style_for(question, pass_seed);
      std::uint64_t salt = mock_detail::hash64({"salt", question, std::to_string(pass_seed)});
      for (ResponseStyle s : {style, ResponseStyle::Logic, ResponseStyle::Correct}) {
        if (auto r = synthesize_response(*tmpl, *problem, s, salt)) return r->text;
      }
      return "The answer is " + problem->ground_truth.str() + ".";
    }
    static const std::regex what_is(R"(^What is (.+)\?$)");
    std::smatch m;
    if (std::regex_match(prompt, m, what_is)) {
      try {
        auto e = expr::parse(m[1].str(), kSolverGrammar);
        Rational v = expr::evaluate<Rational>(e, [](const std::string&) -> Rational { throw std::out_of_range("var"); });
        std::uint64_t h = mock_detail::hash64({"retest", prompt, std::to_string(options_.seed)});
        if (mock_detail::unit(h) < options_.retest_error_rate && is_integer(v))
          v = *parse_rational(mock_detail::bump_digit(boost::multiprecision::numerator(v), h));
        return m[1].str() + " = " + to_string(v);
      } catch (const std::exception&) {
        return "I am not sure.";
      }
    }
    return "I am not sure.";
  }

  MockTargetOptions options_;
  std::map<std::string, std::pair<const GeneratedProblem*, const ProblemTemplate*>> by_question_;
};

// A judge or target that is never reachable.
class UnreachableModel final : public ChatModel {
 public:
  explicit UnreachableModel(std::string name) : name_(std::move(name)) {}
  ChatResponse complete(const ChatRequest&) override { throw EndpointUnavailable(name_ + " is unreachable"); }
  std::string model_name() const override { return name_; }
  std::string fingerprint() const override { return name_ + "@mock://down"; }

 private:
  std::string name_;
};

// ---- labelled fixtures ----

struct GradingFixture {
  GeneratedProblem problem;
  SynthesizedResponse response;
  Verdict expected;
};

// `per_class` fixtures of each expected verdict. The NonLogicalError group
// mixes arithmetic slips with number-copy errors (every fourth fixture).
inline std::vector<GradingFixture> synthesize_fixtures(const Corpus& corpus, std::uint64_t master_seed = 2025,
                                                       std::size_t per_class = 20) {
  GenerationConfig config;
  config.master_seed = master_seed;
  std::vector<GradingFixture> out;
  std::array<std::size_t, 3> made{};  // correct, nonlogical, logical
  std::size_t copies = 0;
  for (std::size_t variant = 0; variant < 50; ++variant) {
    for (Level level : kPerturbedLevels) {
      for (const auto& t : corpus.templates) {
        if (made[0] >= per_class && made[1] >= per_class && made[2] >= per_class) return out;
        GeneratedProblem p;
        try {
          p = generate_instance(t, level, variant, config);
        } catch (const InfeasibleTemplate&) {
          continue;
        }
        std::uint64_t salt = mock_detail::hash64({"fixture", t.id, to_string(level), std::to_string(variant)});
        std::size_t cls = salt % 3;
        if (made[cls] >= per_class) continue;
        ResponseStyle style = cls == 0 ? ResponseStyle::Correct : cls == 2 ? ResponseStyle::Logic : ResponseStyle::Arithmetic;
        if (cls == 1 && made[1] % 4 == 3 && copies < per_class / 4) style = ResponseStyle::NumberCopy;
        auto r = synthesize_response(t, p, style, salt >> 2);
        if (!r) continue;
        if (style == ResponseStyle::NumberCopy) ++copies;
        ++made[cls];
        out.push_back({std::move(p), std::move(*r), expected_verdict(style)});
      }
    }
  }
  return out;
}

}  // namespace gsmr
