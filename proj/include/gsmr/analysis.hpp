#pragma once

// Statistics over completed stores: per-level rates with set-based confidence
// intervals, gaps, recall@n, token means, numeral distributions and the
// standalone arithmetic retest.

#include "gsmr/grader.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace gsmr {

inline std::string format_fixed(double v, int decimals = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// "38.5(0.8)"; a missing half-width renders as the bare rate.
inline std::string format_rate_cell(double rate, std::optional<double> half_width) {
  std::string s = format_fixed(rate);
  if (half_width) s += "(" + format_fixed(*half_width) + ")";
  return s;
}

// "73/299 (24.4%)"
inline std::string format_fraction_cell(std::size_t numerator, std::size_t denominator) {
  double pct = denominator ? 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator) : 0.0;
  return std::to_string(numerator) + "/" + std::to_string(denominator) + " (" + format_fixed(pct) + "%)";
}

struct ProportionStats {
  double rate = 0;                   // percent
  std::optional<double> half_width;  // percent; absent with fewer than two sets
  std::size_t sets = 0;
};

// Mean of the set proportions and a normal-approximation 95% half-width
// 1.96 * s / sqrt(k), s the sample standard deviation over k sets.
inline ProportionStats proportion_stats(std::span<const double> proportions) {
  ProportionStats out;
  out.sets = proportions.size();
  if (proportions.empty()) return out;
  double k = static_cast<double>(proportions.size());
  double mean = 0;
  for (double p : proportions) mean += p;
  mean /= k;
  out.rate = mean * 100.0;
  if (proportions.size() >= 2) {
    double ss = 0;
    for (double p : proportions) ss += (p - mean) * (p - mean);
    double sd = std::sqrt(ss / (k - 1));
    out.half_width = 1.96 * sd / std::sqrt(k) * 100.0;
  }
  return out;
}

// One graded pass joined with its dataset coordinates.
struct GradedPass {
  std::string model;
  Level level = Level::Original;
  std::string template_id;
  std::size_t variant_index = 0;
  std::string instance_key;
  int pass_index = 0;
  Verdict verdict = Verdict::Ungradable;
};

inline std::vector<GradedPass> join_grades(std::span<const GeneratedProblem> dataset,
                                           const std::map<PassKey, GradeRecord>& grades) {
  std::map<std::string, const GeneratedProblem*, std::less<>> by_key;
  for (const auto& p : dataset) by_key.emplace(p.instance_key(), &p);
  std::vector<GradedPass> out;
  for (const auto& [k, g] : grades) {
    auto it = by_key.find(k.first);
    if (it == by_key.end()) continue;
    const auto& p = *it->second;
    out.push_back({g.model, p.level, p.template_id, p.variant_index, k.first, k.second, g.verdict});
  }
  return out;
}

struct RateCell {
  std::string model;
  Level level = Level::Original;
  std::size_t passes = 0;
  std::size_t expected_passes = 0;  // 0 when unknown
  std::array<ProportionStats, 4> by_verdict;  // indexed by Verdict

  const ProportionStats& operator[](Verdict v) const { return by_verdict[static_cast<std::size_t>(v)]; }
};

struct RateTable {
  std::vector<RateCell> cells;  // ordered by (model, level)

  const RateCell* find(std::string_view model, Level level) const {
    for (const auto& c : cells)
      if (c.model == model && c.level == level) return &c;
    return nullptr;
  }
};

// Sets are variant indices: set v holds variant v of every template. Each set
// contributes the proportion of each verdict among its graded passes.
inline RateTable compute_error_rates(std::span<const GradedPass> passes,
                                     const std::map<std::pair<std::string, Level>, std::size_t>& expected = {}) {
  std::map<std::pair<std::string, Level>, std::map<std::size_t, std::array<std::size_t, 5>>> counts;
  for (const auto& p : passes) {
    auto& row = counts[{p.model, p.level}][p.variant_index];
    ++row[static_cast<std::size_t>(p.verdict)];
    ++row[4];
  }
  RateTable table;
  for (const auto& [cell_key, sets] : counts) {
    RateCell cell;
    cell.model = cell_key.first;
    cell.level = cell_key.second;
    if (auto it = expected.find(cell_key); it != expected.end()) cell.expected_passes = it->second;
    for (const auto& [v, row] : sets) cell.passes += row[4];
    for (Verdict verdict : kAllVerdicts) {
      std::vector<double> props;
      for (const auto& [v, row] : sets)
        props.push_back(static_cast<double>(row[static_cast<std::size_t>(verdict)]) / static_cast<double>(row[4]));
      cell.by_verdict[static_cast<std::size_t>(verdict)] = proportion_stats(props);
    }
    table.cells.push_back(std::move(cell));
  }
  return table;
}

struct ModelGaps {
  std::string model;
  std::optional<double> l6_minus_l1;
  std::optional<double> l1_minus_baseline;
};

inline std::vector<ModelGaps> compute_gaps(const RateTable& table) {
  std::set<std::string> models;
  for (const auto& c : table.cells) models.insert(c.model);
  std::vector<ModelGaps> out;
  for (const auto& m : models) {
    ModelGaps g{m};
    auto logical = [&](Level l) -> std::optional<double> {
      const auto* c = table.find(m, l);
      if (!c) return std::nullopt;
      return (*c)[Verdict::LogicalError].rate;
    };
    auto l1 = logical(Level::L1), l6 = logical(Level::L6), base = logical(Level::Original);
    if (l1 && l6) g.l6_minus_l1 = *l6 - *l1;
    if (l1 && base) g.l1_minus_baseline = *l1 - *base;
    out.push_back(g);
  }
  return out;
}

struct InsufficientPasses : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RecallCell {
  std::string model;
  Level level;
  int n;
  double recall;  // percent
  std::size_t questions;
};

// A question is recalled at n when one of its first n passes shows correct
// logic (Correct or NonLogicalError).
inline std::vector<RecallCell> recall_at_n(std::span<const GradedPass> passes, std::span<const int> n_values) {
  if (n_values.empty()) return {};
  int max_n = *std::max_element(n_values.begin(), n_values.end());
  // (model, level) -> question -> pass_index -> verdict
  std::map<std::pair<std::string, Level>, std::map<std::string, std::map<int, Verdict>>> grouped;
  for (const auto& p : passes) grouped[{p.model, p.level}][p.instance_key][p.pass_index] = p.verdict;
  std::vector<RecallCell> out;
  for (const auto& [cell, questions] : grouped) {
    for (const auto& [key, by_pass] : questions) {
      for (int i = 0; i < max_n; ++i)
        if (!by_pass.count(i))
          throw InsufficientPasses(key + " (" + cell.first + ") lacks graded pass " + std::to_string(i) +
                                   " needed for n=" + std::to_string(max_n));
    }
    for (int n : n_values) {
      std::size_t recalled = 0;
      for (const auto& [key, by_pass] : questions) {
        for (int i = 0; i < n; ++i) {
          Verdict v = by_pass.at(i);
          if (v == Verdict::Correct || v == Verdict::NonLogicalError) {
            ++recalled;
            break;
          }
        }
      }
      out.push_back({cell.first, cell.second, n, 100.0 * static_cast<double>(recalled) / static_cast<double>(questions.size()),
                     questions.size()});
    }
  }
  return out;
}

struct TokenCell {
  std::string model;
  Level level;
  std::optional<double> mean_completion_tokens;  // absent when no record carries usage
  std::size_t records = 0;
  std::size_t missing_usage = 0;
};

inline std::vector<TokenCell> token_stats(std::span<const GeneratedProblem> dataset,
                                          const std::map<PassKey, InferenceRecord>& records) {
  std::map<std::string, Level, std::less<>> level_of;
  for (const auto& p : dataset) level_of.emplace(p.instance_key(), p.level);
  std::map<std::pair<std::string, Level>, std::pair<TokenCell, long double>> acc;
  for (const auto& [k, r] : records) {
    if (!r.ok) continue;
    auto it = level_of.find(k.first);
    if (it == level_of.end()) continue;
    auto& [cell, sum] = acc[{r.model, it->second}];
    cell.model = r.model;
    cell.level = it->second;
    ++cell.records;
    if (r.completion_tokens) sum += static_cast<long double>(*r.completion_tokens);
    else ++cell.missing_usage;
  }
  std::vector<TokenCell> out;
  for (auto& [k, v] : acc) {
    auto& [cell, sum] = v;
    std::size_t with_usage = cell.records - cell.missing_usage;
    if (with_usage) cell.mean_completion_tokens = static_cast<double>(sum / static_cast<long double>(with_usage));
    out.push_back(cell);
  }
  return out;
}

struct NumeralCorpusItem {
  std::string question;
  std::string answer;  // ground truth; text after "####" when present
};

struct NumeralDistribution {
  std::size_t total = 0;
  std::vector<Integer> thresholds;      // 10, 100, ...
  std::vector<std::size_t> below;       // cumulative counts of |n| < threshold
  double fraction_below(const Integer& threshold) const {
    for (std::size_t i = 0; i < thresholds.size(); ++i)
      if (thresholds[i] == threshold) return static_cast<double>(below[i]) / static_cast<double>(total);
    throw std::out_of_range("threshold not tabulated: " + threshold.str());
  }
};

inline std::vector<Integer> answer_numerals(std::string_view answer) {
  auto marker = answer.rfind("####");
  return extract_number_list(marker == std::string_view::npos ? answer : answer.substr(marker + 4));
}

// Every integer literal of the questions and of the final ground-truth values.
// Thresholds run from 10 up to the first power of ten above every numeral,
// where the cumulative fraction reaches 1.
inline NumeralDistribution numeral_distribution(std::span<const NumeralCorpusItem> corpus) {
  if (corpus.empty()) throw std::invalid_argument("numeral corpus is empty");
  std::vector<Integer> all;
  for (const auto& item : corpus) {
    for (auto& n : extract_number_list(item.question)) all.push_back(boost::multiprecision::abs(n));
    for (auto& n : answer_numerals(item.answer)) all.push_back(boost::multiprecision::abs(n));
  }
  if (all.empty()) throw std::invalid_argument("numeral corpus contains no integer literals");
  std::sort(all.begin(), all.end());
  NumeralDistribution d;
  d.total = all.size();
  Integer t = 10;
  for (;;) {
    d.thresholds.push_back(t);
    d.below.push_back(static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), t) - all.begin()));
    if (d.below.back() == d.total && t >= 10000000) break;
    t *= 10;
  }
  return d;
}

// GSM8K-style JSON lines with "question" and "answer" fields.
inline std::vector<NumeralCorpusItem> read_question_answer_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<NumeralCorpusItem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line);
    out.push_back({j.at("question").get<std::string>(), j.at("answer").get<std::string>()});
  }
  return out;
}

// Claims extraction: asks the judge which value the response stated for each
// variable of its own solver() translation.
inline constexpr std::string_view kClaimsPromptHead =
    "You are given a response to a math problem and a Python function solver() that replicates the "
    "reasoning of that response.\n"
    "For every variable assigned in solver(), report the numerical value that the response itself states for "
    "that quantity, copied exactly as written in the response even if it is arithmetically wrong. Use null when "
    "the response states no value for it.\n"
    "Output only a JSON object of the form {\"claims\": {\"<variable>\": \"<value or null>\"}}.\n\n"
    "Python function:\n```python\n";
inline constexpr std::string_view kClaimsPromptMiddle = "```\n\nResponse:\n";

inline std::string build_claims_prompt(std::string_view solver_code, std::string_view response) {
  std::string p(kClaimsPromptHead);
  p += solver_code;
  if (!solver_code.ends_with('\n')) p += '\n';
  p += kClaimsPromptMiddle;
  p += response;
  p += '\n';
  return p;
}

inline std::map<std::string, Rational> parse_claims(std::string_view text) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw JudgeParseError("no JSON object in claims output");
  auto j = nlohmann::json::parse(detail::repair_json(text.substr(open, close - open + 1)), nullptr, false);
  if (j.is_discarded() || !j.contains("claims") || !j["claims"].is_object())
    throw JudgeParseError("claims output lacks a claims object");
  std::map<std::string, Rational> out;
  for (const auto& [name, v] : j["claims"].items()) {
    if (v.is_null()) continue;
    std::optional<Rational> r;
    if (v.is_number()) r = rational_from_json(v);
    else if (v.is_string()) {
      auto nums = scan_numerals(v.get<std::string>());
      if (!nums.empty()) r = nums.front().value;
    }
    if (r) out.emplace(name, *r);
  }
  return out;
}

struct ArithmeticInstance {
  std::string instance_key;
  int pass_index = 0;
  std::string model;
  Level level = Level::Original;
  std::string expression;  // operands substituted, ASCII operators
  Rational claimed;
  Rational correct;
};

struct MiningLog {
  std::string instance_key;
  int pass_index;
  std::string reason;
};

struct MiningResult {
  std::vector<ArithmeticInstance> instances;
  std::vector<MiningLog> skipped;
};

namespace detail {

// Puts number-copy errors back: literals the judge corrected are replaced by
// the value the response actually wrote.
inline expr::NodePtr as_written(const expr::NodePtr& e, const std::vector<CopyCorrection>& corrections) {
  using namespace expr;
  return std::visit(
      [&](const auto& v) -> NodePtr {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Literal>) {
          for (const auto& [written, fixed] : corrections)
            if (v.value == Rational(fixed)) return make_literal(Rational(written));
          return e;
        } else if constexpr (std::is_same_v<T, Variable>) {
          return e;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return make_negate(as_written(v.operand, corrections));
        } else {
          return make_binary(v.op, as_written(v.lhs, corrections), as_written(v.rhs, corrections));
        }
      },
      e->value);
}

}  // namespace detail

// Replays one solver against the response's stated values. Each operation is
// recomputed from the operands the response itself used: values it claimed
// for earlier steps and numbers as it copied them. A slip is therefore mined
// once, at the step where it happened.
inline std::vector<std::pair<std::string, std::pair<Rational, Rational>>> replay_claims(
    const SolverProgram& program, const std::map<std::string, Rational>& claims,
    const std::vector<CopyCorrection>& corrections = {}) {
  std::vector<std::pair<std::string, std::pair<Rational, Rational>>> out;
  std::map<std::string, Rational> believed;
  for (const auto& statement : program.statements) {
    if (!statement.target) break;
    SolverStatement st{statement.target, detail::as_written(statement.value, corrections)};
    auto lookup = [&](const std::string& n) -> Rational { return believed.at(n); };
    Rational correct;
    try {
      correct = expr::evaluate<Rational>(st.value, lookup);
    } catch (const expr::DivisionByZero&) {
      break;
    }
    auto claim = claims.find(*st.target);
    bool is_operation = std::holds_alternative<expr::Binary>(st.value->value);
    if (claim != claims.end() && is_operation && claim->second != correct) {
      std::string shown = expr::to_string(st.value, [&](const std::string& n) {
        const Rational& v = believed.at(n);
        return v < 0 ? "(" + to_string(v) + ")" : to_string(v);
      });
      out.push_back({shown, {claim->second, correct}});
    }
    believed[*st.target] = claim != claims.end() ? claim->second : correct;
  }
  return out;
}

inline MiningResult mine_arithmetic_errors(std::span<const GeneratedProblem> dataset,
                                           const std::map<PassKey, GradeRecord>& grades,
                                           const std::map<PassKey, InferenceRecord>& inference, ChatModel& judge) {
  std::map<std::string, Level, std::less<>> level_of;
  for (const auto& p : dataset) level_of.emplace(p.instance_key(), p.level);
  MiningResult result;
  for (const auto& [k, g] : grades) {
    if (g.verdict != Verdict::NonLogicalError && g.verdict != Verdict::LogicalError) continue;
    auto skip = [&](std::string why) { result.skipped.push_back({k.first, k.second, std::move(why)}); };
    if (!g.judge) {
      skip("no judge translation stored");
      continue;
    }
    auto inf = inference.find(k);
    if (inf == inference.end() || !inf->second.ok) {
      skip("no inference record");
      continue;
    }
    auto parsed = parse_solver(g.judge->solver_code);
    if (auto* o = std::get_if<OutsideSubset>(&parsed)) {
      skip("solver outside built-in subset: " + o->reason);
      continue;
    }
    const auto& program = std::get<SolverProgram>(parsed);
    std::map<std::string, Rational> claims;
    try {
      ChatRequest req{judge.model_name(), {{"user", build_claims_prompt(g.judge->solver_code, inf->second.response)}},
                      0.0, 1.0, 2048};
      claims = parse_claims(judge.complete(req).content);
    } catch (const JudgeParseError& e) {
      skip(std::string("alignment failed: ") + e.what());
      continue;
    } catch (const RequestFailed& e) {
      skip(std::string("alignment request failed: ") + e.what());
      continue;
    }
    if (claims.empty()) {
      skip("response states no intermediate values");
      continue;
    }
    auto lvl = level_of.find(k.first);
    for (auto& [expression, values] : replay_claims(program, claims, g.number_copy_corrections)) {
      result.instances.push_back({k.first, k.second, g.model, lvl == level_of.end() ? Level::Original : lvl->second,
                                  expression, values.first, values.second});
    }
  }
  return result;
}

inline std::string retest_prompt(std::string_view expression) { return "What is " + std::string(expression) + "?"; }

struct RetestOutcome {
  ArithmeticInstance instance;
  std::string reply;
  std::optional<Rational> answered;
  bool correct = false;
  bool no_numeric = false;
};

struct RetestCell {
  std::string model;
  Level level;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t no_numeric = 0;
};

inline std::vector<RetestOutcome> standalone_retest(std::span<const ArithmeticInstance> instances, ChatModel& model,
                                                    std::size_t concurrency = 8) {
  if (instances.empty()) throw std::invalid_argument("no arithmetic instances to retest");
  std::vector<RetestOutcome> out(instances.size());
  std::atomic<std::size_t> next{0};
  std::mutex m;
  std::exception_ptr fatal;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next++;
      if (i >= instances.size()) return;
      RetestOutcome& o = out[i];
      o.instance = instances[i];
      try {
        o.reply = model.complete({model.model_name(), {{"user", retest_prompt(o.instance.expression)}}, 0.0, 1.0, 256})
                      .content;
      } catch (const RequestFailed& e) {
        o.reply.clear();
      } catch (...) {
        std::lock_guard lock(m);
        if (!fatal) fatal = std::current_exception();
        next = instances.size();
        return;
      }
      o.answered = extract_final_answer(o.reply);
      o.no_numeric = !o.answered;
      if (o.answered) {
        o.correct = is_integer(o.instance.correct)
                        ? answers_match(*o.answered, boost::multiprecision::numerator(o.instance.correct))
                        : *o.answered == o.instance.correct;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(concurrency, instances.size())); ++t)
      pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);
  return out;
}

inline std::vector<RetestCell> tabulate_retest(std::span<const RetestOutcome> outcomes) {
  std::map<std::pair<std::string, Level>, RetestCell> cells;
  for (const auto& o : outcomes) {
    auto& c = cells[{o.instance.model, o.instance.level}];
    c.model = o.instance.model;
    c.level = o.instance.level;
    ++c.total;
    c.correct += o.correct;
    c.no_numeric += o.no_numeric;
  }
  std::vector<RetestCell> out;
  for (auto& [k, c] : cells) out.push_back(c);
  return out;
}

// ---- report files ----

namespace detail {

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string opt_num(const std::optional<double>& v, int decimals = 6) {
  return v ? format_fixed(*v, decimals) : std::string();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string rates_csv(const RateTable& t) {
  std::string s = "model,level,verdict,rate_pct,ci_half_width_pct,sets,passes,expected_passes\n";
  for (const auto& c : t.cells)
    for (Verdict v : kAllVerdicts) {
      const auto& st = c[v];
      s += detail::csv_escape(c.model) + "," + std::string(to_string(c.level)) + "," + std::string(to_string(v)) + "," +
           format_fixed(st.rate, 6) + "," + detail::opt_num(st.half_width) + "," + std::to_string(st.sets) + "," +
           std::to_string(c.passes) + "," + (c.expected_passes ? std::to_string(c.expected_passes) : "") + "\n";
    }
  return s;
}

inline std::string gaps_csv(std::span<const ModelGaps> gaps) {
  std::string s = "model,l6_minus_l1_logical_pp,l1_minus_baseline_logical_pp\n";
  for (const auto& g : gaps)
    s += detail::csv_escape(g.model) + "," + detail::opt_num(g.l6_minus_l1) + "," + detail::opt_num(g.l1_minus_baseline) +
         "\n";
  return s;
}

inline std::string recall_csv(std::span<const RecallCell> cells) {
  std::string s = "model,level,n,recall_pct,questions\n";
  for (const auto& c : cells)
    s += detail::csv_escape(c.model) + "," + std::string(to_string(c.level)) + "," + std::to_string(c.n) + "," +
         format_fixed(c.recall, 6) + "," + std::to_string(c.questions) + "\n";
  return s;
}

inline std::string tokens_csv(std::span<const TokenCell> cells) {
  std::string s = "model,level,mean_completion_tokens,records,missing_usage\n";
  for (const auto& c : cells)
    s += detail::csv_escape(c.model) + "," + std::string(to_string(c.level)) + "," +
         detail::opt_num(c.mean_completion_tokens) + "," + std::to_string(c.records) + "," +
         std::to_string(c.missing_usage) + "\n";
  return s;
}

inline std::string numdist_csv(const NumeralDistribution& d) {
  std::string s = "threshold,count_below,fraction_below\n";
  for (std::size_t i = 0; i < d.thresholds.size(); ++i)
    s += d.thresholds[i].str() + "," + std::to_string(d.below[i]) + "," +
         format_fixed(static_cast<double>(d.below[i]) / static_cast<double>(d.total), 6) + "\n";
  s += "inf," + std::to_string(d.total) + ",1.000000\n";
  return s;
}

inline std::string retest_csv(std::span<const RetestCell> cells) {
  std::string s = "model,level,correct,total,accuracy_pct,residual_error_pct,no_numeric,accuracy_cell,error_cell\n";
  for (const auto& c : cells) {
    double acc = c.total ? 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total) : 0.0;
    s += detail::csv_escape(c.model) + "," + std::string(to_string(c.level)) + "," + std::to_string(c.correct) + "," +
         std::to_string(c.total) + "," + format_fixed(acc, 6) + "," + format_fixed(c.total ? 100.0 - acc : 0.0, 6) + "," +
         std::to_string(c.no_numeric) + "," + detail::csv_escape(format_fraction_cell(c.correct, c.total)) + "," +
         detail::csv_escape(format_fraction_cell(c.total - c.correct, c.total)) + "\n";
  }
  return s;
}

inline nlohmann::json to_json(const RateTable& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : t.cells) {
    nlohmann::json v;
    for (Verdict verdict : kAllVerdicts) {
      const auto& st = c[verdict];
      v[std::string(to_string(verdict))] = {{"rate_pct", st.rate},
                                            {"ci_half_width_pct", st.half_width ? nlohmann::json(*st.half_width) : nlohmann::json()},
                                            {"cell", format_rate_cell(st.rate, st.half_width)}};
    }
    cells.push_back({{"model", c.model}, {"level", to_string(c.level)}, {"passes", c.passes},
                     {"expected_passes", c.expected_passes}, {"sets", c[Verdict::Correct].sets}, {"verdicts", v}});
  }
  return cells;
}

// Aligned text table: one row per model and verdict, one column per level.
inline std::string render_rate_table(const RateTable& t, Verdict verdict) {
  std::set<std::string> models;
  for (const auto& c : t.cells) models.insert(c.model);
  std::size_t w = std::string(to_string(verdict)).size() + 4;
  for (const auto& m : models) w = std::max(w, m.size() + 2);
  auto pad = [](std::string s, std::size_t n) {
    if (s.size() < n) s.append(n - s.size(), ' ');
    return s;
  };
  std::string out = pad(std::string(to_string(verdict)) + " %", w);
  for (Level l : kAllLevels) out += pad(std::string(l == Level::Original ? "baseline" : to_string(l)), 12);
  out += "\n";
  for (const auto& m : models) {
    out += pad(m, w);
    for (Level l : kAllLevels) {
      const auto* c = t.find(m, l);
      out += pad(c ? format_rate_cell((*c)[verdict].rate, (*c)[verdict].half_width) : "-", 12);
    }
    out += "\n";
  }
  return out;
}

}  // namespace gsmr
