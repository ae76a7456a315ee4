#pragma once

// Response grading: final-answer comparison, judge translation of the
// response's reasoning into a solver() program, and re-execution.

#include "gsmr/chat.hpp"
#include "gsmr/guest.hpp"
#include "gsmr/inference.hpp"
#include "gsmr/solver.hpp"
#include "gsmr/text_numbers.hpp"

namespace gsmr {

enum class Verdict { Correct, NonLogicalError, LogicalError, Ungradable };

inline constexpr std::array<Verdict, 4> kAllVerdicts{Verdict::Correct, Verdict::NonLogicalError,
                                                     Verdict::LogicalError, Verdict::Ungradable};

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::NonLogicalError: return "nonlogical_error";
    case Verdict::LogicalError: return "logical_error";
    case Verdict::Ungradable: return "ungradable";
  }
  return "?";
}

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  for (Verdict v : kAllVerdicts)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

enum class ExecutorPolicy { BuiltInOnly, GuestOnly, BuiltInThenGuest };
enum class ExecutorUsed { None, BuiltIn, Guest };

inline std::string_view to_string(ExecutorPolicy p) {
  switch (p) {
    case ExecutorPolicy::BuiltInOnly: return "builtin";
    case ExecutorPolicy::GuestOnly: return "guest";
    case ExecutorPolicy::BuiltInThenGuest: return "builtin-then-guest";
  }
  return "?";
}

inline std::optional<ExecutorPolicy> parse_executor_policy(std::string_view s) {
  for (auto p : {ExecutorPolicy::BuiltInOnly, ExecutorPolicy::GuestOnly, ExecutorPolicy::BuiltInThenGuest})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

inline std::string_view to_string(ExecutorUsed e) {
  switch (e) {
    case ExecutorUsed::None: return "none";
    case ExecutorUsed::BuiltIn: return "builtin";
    case ExecutorUsed::Guest: return "guest";
  }
  return "?";
}

// Judge prompt. Typographic quotes of the original are written as ASCII so
// the requested output is parseable JSON.
inline constexpr std::string_view kJudgePromptHead =
    R"(You are tasked with writing Python code that replicates the logic described in a given response to a math problem.
Your code must strictly follow the exact reasoning steps provided in the response, regardless of whether the logic is correct, inconsistent, or flawed.

1. Do not fix or modify the reasoning described in the response, even if they seem incorrect or nonsensical.
2. Develop a Python function named solver() that replicates the logic in the response exactly as described:
   - Define and assign all necessary variables within the function.
   - The function must not take any external arguments.
   - The function must return the computed final numerical result.
3. Ensure that all arithmetic operations described in the response are explicitly written as code. Avoid directly copying the results of these operations or the final answer from the response.
4. Refer to the list of numbers extracted from the question provided to ensure any copied numbers in the response match the original numbers.
   - If a number in the response is incorrectly copied (e.g., misrepresenting 1333785 as 133785 or 13333785), correct the number in your code and document the correction as a comment in the code.
5. Include an explanation in the explain field that describes the steps and logic from the response, regardless of correctness.
6. Provide the output in the following format:
{
    "extracted_answer": "<final numerical value of the answer>",
    "explain": "<detailed explanation of the response logic>",
    "python_code": "```python\n<generated Python function>\n```"
}

- This is the list of numbers extracted from the question: )";
inline constexpr std::string_view kJudgePromptMiddle = ".\n- This the response: ";
inline constexpr std::string_view kJudgePromptTail = ".\n";

// Plain concatenation so braces inside the response are never interpreted.
inline std::string build_judge_prompt(const std::vector<Integer>& number_list, std::string_view response) {
  std::string p(kJudgePromptHead);
  p += format_number_list(number_list);
  p += kJudgePromptMiddle;
  p += response;
  p += kJudgePromptTail;
  return p;
}

struct JudgeOutput {
  std::string extracted_answer;
  std::string explain;
  std::string solver_code;  // python_code with the fence removed
};

inline nlohmann::json to_json(const JudgeOutput& j) {
  return {{"extracted_answer", j.extracted_answer}, {"explain", j.explain}, {"python_code", j.solver_code}};
}

struct JudgeParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct JudgeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Replaces typographic quotes with ASCII ones and escapes raw control
// characters inside string literals, the two ways chat models most often
// break otherwise valid JSON.
inline std::string repair_json(std::string_view text) {
  std::string s;
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto rest = text.substr(i);
    if (rest.starts_with("“") || rest.starts_with("”")) {
      s.push_back('"');
      i += 2;
    } else {
      s.push_back(text[i]);
    }
  }
  std::string out;
  bool in_string = false, escaped = false;
  for (char c : s) {
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      else if (c == '\n') {
        out += "\\n";
        continue;
      } else if (c == '\r') {
        continue;
      } else if (c == '\t') {
        out += "\\t";
        continue;
      }
    } else if (c == '"') {
      in_string = true;
    }
    out.push_back(c);
  }
  return out;
}

inline std::string json_field_text(const nlohmann::json& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

}  // namespace detail

inline JudgeOutput parse_judge_output(std::string_view text) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw JudgeParseError("no JSON object in judge output");
  std::string_view body = text.substr(open, close - open + 1);
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) j = nlohmann::json::parse(detail::repair_json(body), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw JudgeParseError("judge output is not a JSON object");
  for (const char* key : {"extracted_answer", "explain", "python_code"})
    if (!j.contains(key) || j[key].is_null()) throw JudgeParseError(std::string("judge output lacks ") + key);
  JudgeOutput out;
  out.extracted_answer = detail::json_field_text(j["extracted_answer"]);
  out.explain = detail::json_field_text(j["explain"]);
  out.solver_code = strip_code_fence(detail::json_field_text(j["python_code"]));
  static const std::regex def_solver(R"(\bdef\s+solver\s*\()");
  if (!std::regex_search(out.solver_code, def_solver)) throw JudgeParseError("python_code defines no solver()");
  return out;
}

using CopyCorrection = std::pair<Integer, Integer>;  // (as written in the response, as in the question)

// Corrections documented as code comments: a comment that talks about a
// correction or a copy and names one number absent from the question's list
// and one present in it.
inline std::vector<CopyCorrection> number_copy_corrections(std::string_view solver_code,
                                                           const std::vector<Integer>& number_list) {
  static const std::regex cue(R"(correct|cop(y|ied|ying)|mis(read|represent|typed|transcri))", std::regex::icase);
  std::set<Integer> listed(number_list.begin(), number_list.end());
  std::vector<CopyCorrection> out;
  std::size_t start = 0;
  while (start < solver_code.size()) {
    std::size_t end = solver_code.find('\n', start);
    if (end == std::string_view::npos) end = solver_code.size();
    std::string_view line = solver_code.substr(start, end - start);
    start = end + 1;
    auto hash = line.find('#');
    if (hash == std::string_view::npos) continue;
    std::string comment(line.substr(hash + 1));
    if (!std::regex_search(comment, cue)) continue;
    std::optional<Integer> wrong, right;
    for (const auto& n : scan_numerals(comment)) {
      if (!n.integer || n.value < 0) continue;
      Integer v = boost::multiprecision::numerator(n.value);
      if (listed.count(v)) {
        if (!right) right = v;
      } else if (!wrong) {
        wrong = v;
      }
    }
    if (wrong && right) out.emplace_back(*wrong, *right);
  }
  return out;
}

// Sends the judge prompt; malformed replies are re-asked `reasks` times.
// Transport errors other than RequestFailed propagate.
inline JudgeOutput judge_translate(ChatModel& judge, std::string_view response_text,
                                   const std::vector<Integer>& number_list, int reasks = 2,
                                   int* attempts_out = nullptr) {
  if (response_text.empty()) throw std::invalid_argument("response is empty");
  ChatRequest req{judge.model_name(), {{"user", build_judge_prompt(number_list, response_text)}}, 0.0, 1.0, 4096};
  std::string last;
  for (int attempt = 1; attempt <= reasks + 1; ++attempt) {
    if (attempts_out) *attempts_out = attempt;
    try {
      return parse_judge_output(judge.complete(req).content);
    } catch (const JudgeParseError& e) {
      last = e.what();
    } catch (const RequestFailed& e) {
      last = std::string("judge request failed: ") + e.what();
    }
  }
  throw JudgeFailure(last);
}

struct ExecutionOutcome {
  std::optional<Rational> value;
  ExecutorUsed used = ExecutorUsed::None;
  std::string diagnostic;
};

struct GuestSettings {
  const GuestExecutor* executor = nullptr;
  std::chrono::milliseconds timeout{5000};
  std::size_t memory_cap = 512u << 20;
};

inline ExecutionOutcome execute_solver(std::string_view solver_code, ExecutorPolicy policy,
                                       const GuestSettings& guest = {}) {
  ExecutionOutcome out;
  auto run_guest = [&](std::string why) {
    if (!guest.executor) {
      out.diagnostic = why + "; no guest executor configured";
      return;
    }
    out.used = ExecutorUsed::Guest;
    auto r = guest.executor->execute({std::string(solver_code), guest.timeout, guest.memory_cap});
    if (r.status == GuestResult::Status::Ok) out.value = r.value;
    else out.diagnostic = why + "; guest " + std::string(to_string(r.status)) + ": " + r.stderr_excerpt;
  };
  if (policy == ExecutorPolicy::GuestOnly) {
    run_guest("guest-only policy");
    return out;
  }
  auto parsed = parse_solver(solver_code);
  if (auto* outside = std::get_if<OutsideSubset>(&parsed)) {
    if (policy == ExecutorPolicy::BuiltInOnly) out.diagnostic = "outside built-in subset: " + outside->reason;
    else run_guest("outside built-in subset: " + outside->reason);
    return out;
  }
  out.used = ExecutorUsed::BuiltIn;
  try {
    out.value = run_builtin(std::get<SolverProgram>(parsed));
  } catch (const expr::DivisionByZero& e) {
    out.diagnostic = e.what();
  }
  return out;
}

struct GradeRecord {
  std::string instance_key;
  int pass_index = 0;
  std::string model;
  Verdict verdict = Verdict::Ungradable;
  std::optional<Rational> stated_answer;
  std::optional<Rational> corrected_answer;
  std::vector<CopyCorrection> number_copy_corrections;
  std::optional<JudgeOutput> judge;
  std::string judge_model;
  int judge_attempts = 0;
  ExecutorUsed executor_used = ExecutorUsed::None;
  std::string diagnostics;
};

inline nlohmann::json to_json(const GradeRecord& g) {
  nlohmann::json corrections = nlohmann::json::array();
  for (const auto& [w, r] : g.number_copy_corrections) corrections.push_back({to_json_number(w), to_json_number(r)});
  return {{"instance_key", g.instance_key},
          {"pass_index", g.pass_index},
          {"model", g.model},
          {"verdict", to_string(g.verdict)},
          {"stated_answer", g.stated_answer ? to_json_number(*g.stated_answer) : nlohmann::json()},
          {"corrected_answer", g.corrected_answer ? to_json_number(*g.corrected_answer) : nlohmann::json()},
          {"number_copy_corrections", corrections},
          {"judge", g.judge ? to_json(*g.judge) : nlohmann::json()},
          {"judge_model", g.judge_model},
          {"judge_attempts", g.judge_attempts},
          {"executor_used", to_string(g.executor_used)},
          {"diagnostics", g.diagnostics}};
}

inline GradeRecord grade_from_json(const nlohmann::json& j) {
  GradeRecord g;
  g.instance_key = j.at("instance_key").get<std::string>();
  g.pass_index = j.at("pass_index").get<int>();
  g.model = j.at("model").get<std::string>();
  auto v = parse_verdict(j.at("verdict").get<std::string>());
  if (!v) throw std::runtime_error("unknown verdict " + j["verdict"].dump());
  g.verdict = *v;
  if (!j.at("stated_answer").is_null()) g.stated_answer = rational_from_json(j["stated_answer"]);
  if (!j.at("corrected_answer").is_null()) g.corrected_answer = rational_from_json(j["corrected_answer"]);
  for (const auto& c : j.at("number_copy_corrections"))
    g.number_copy_corrections.emplace_back(integer_from_json(c.at(0)), integer_from_json(c.at(1)));
  if (!j.at("judge").is_null()) {
    const auto& jj = j["judge"];
    g.judge = JudgeOutput{jj.at("extracted_answer").get<std::string>(), jj.at("explain").get<std::string>(),
                          jj.at("python_code").get<std::string>()};
  }
  g.judge_model = j.value("judge_model", std::string());
  g.judge_attempts = j.value("judge_attempts", 0);
  auto used = j.value("executor_used", std::string("none"));
  g.executor_used = used == "builtin" ? ExecutorUsed::BuiltIn : used == "guest" ? ExecutorUsed::Guest : ExecutorUsed::None;
  g.diagnostics = j.value("diagnostics", std::string());
  return g;
}

struct GradeOptions {
  ExecutorPolicy policy = ExecutorPolicy::BuiltInThenGuest;
  GuestSettings guest;
  int judge_reasks = 2;
};

inline GradeRecord grade_response(const GeneratedProblem& problem, std::string_view response_text, ChatModel& judge,
                                  const GradeOptions& options = {}) {
  GradeRecord g;
  g.instance_key = problem.instance_key();
  g.stated_answer = extract_final_answer(response_text);
  if (g.stated_answer && answers_match(*g.stated_answer, problem.ground_truth)) {
    g.verdict = Verdict::Correct;
    return g;
  }
  g.judge_model = judge.model_name();
  auto numbers = extract_number_list(problem.question_text);
  if (response_text.empty()) {
    g.diagnostics = "empty response";
    return g;
  }
  try {
    g.judge = judge_translate(judge, response_text, numbers, options.judge_reasks, &g.judge_attempts);
  } catch (const JudgeFailure& e) {
    g.diagnostics = std::string("judge failure: ") + e.what();
    return g;
  }
  g.number_copy_corrections = number_copy_corrections(g.judge->solver_code, numbers);
  auto exec = execute_solver(g.judge->solver_code, options.policy, options.guest);
  g.executor_used = exec.used;
  if (!exec.value) {
    g.diagnostics = exec.diagnostic;
    return g;
  }
  g.corrected_answer = exec.value;
  g.verdict = answers_match(*exec.value, problem.ground_truth) ? Verdict::NonLogicalError : Verdict::LogicalError;
  return g;
}

inline std::map<PassKey, GradeRecord> load_grades(const std::filesystem::path& path, std::size_t* malformed = nullptr) {
  auto contents = read_jsonl(path);
  if (malformed) *malformed = contents.malformed_lines;
  std::map<PassKey, GradeRecord> out;
  for (const auto& j : contents.records) {
    try {
      auto g = grade_from_json(j);
      PassKey k{g.instance_key, g.pass_index};
      out.try_emplace(k, std::move(g));
    } catch (const std::exception&) {
      if (malformed) ++*malformed;
    }
  }
  return out;
}

struct GradingSummary {
  std::size_t graded = 0;
  std::size_t already_done = 0;
  std::size_t missing_inference = 0;  // no successful inference record
  std::array<std::size_t, 4> by_verdict{};
};

struct GradingBatchOptions {
  GradeOptions grade;
  std::size_t concurrency = 8;
};

// Grades every successful inference record not yet in `store_path`.
// EndpointUnavailable and AuthError from the judge abort the stage.
inline GradingSummary grade_batch(std::span<const GeneratedProblem> dataset,
                                  const std::map<PassKey, InferenceRecord>& inference, ChatModel& judge,
                                  const std::filesystem::path& store_path, int n_passes,
                                  const GradingBatchOptions& options = {}) {
  auto done = load_grades(store_path);
  GradingSummary summary;
  struct Job {
    const GeneratedProblem* problem;
    const InferenceRecord* record;
  };
  std::vector<Job> jobs;
  for (const auto& p : dataset) {
    for (int pass = 0; pass < n_passes; ++pass) {
      PassKey k{p.instance_key(), pass};
      if (done.count(k)) {
        ++summary.already_done;
        continue;
      }
      auto it = inference.find(k);
      if (it == inference.end() || !it->second.ok) {
        ++summary.missing_inference;
        continue;
      }
      jobs.push_back({&p, &it->second});
    }
  }
  if (jobs.empty()) return summary;
  JsonlAppender store(store_path);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex m;
  std::exception_ptr fatal;
  auto worker = [&] {
    while (!abort) {
      std::size_t i = next++;
      if (i >= jobs.size()) return;
      GradeRecord g;
      try {
        g = grade_response(*jobs[i].problem, jobs[i].record->response, judge, options.grade);
      } catch (...) {
        std::lock_guard lock(m);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      }
      g.pass_index = jobs[i].record->pass_index;
      g.model = jobs[i].record->model;
      store.append(to_json(g));
      std::lock_guard lock(m);
      ++summary.graded;
      ++summary.by_verdict[static_cast<std::size_t>(g.verdict)];
    }
  };
  {
    std::vector<std::jthread> pool;
    std::size_t n = std::max<std::size_t>(1, std::min(options.concurrency, jobs.size()));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);
  return summary;
}

}  // namespace gsmr
