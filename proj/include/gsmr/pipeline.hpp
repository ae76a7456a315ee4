#pragma once

// Run directories and the stage commands behind the gsmr CLI.
//
//   <run>/manifest.json         append-only event log
//   <run>/dataset/*.jsonl       one file per level
//   <run>/inference/<model>.jsonl
//   <run>/grades/<model>.jsonl
//   <run>/retest/<model>.jsonl
//   <run>/report/               csv, json and text tables

#include "gsmr/analysis.hpp"
#include "gsmr/mock.hpp"

#include <sys/file.h>

#include <chrono>
#include <ctime>
#include <iostream>

namespace gsmr {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitEndpoint = 3, kExitThreshold = 4 };

struct CommandError : std::runtime_error {
  int code;
  CommandError(int code_, const std::string& what) : std::runtime_error(what), code(code_) {}
};

// ---- run directory plumbing ----

class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    auto path = run_dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw CommandError(kExitData, "cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw CommandError(kExitData, "another gsmr process is writing to " + run_dir.string());
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

inline std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

class Manifest {
 public:
  explicit Manifest(std::filesystem::path run_dir) : path_(std::move(run_dir) / "manifest.json") {
    if (std::filesystem::exists(path_)) {
      doc_ = nlohmann::json::parse(read_file(path_), nullptr, false);
      if (doc_.is_discarded() || !doc_.contains("events")) throw CommandError(kExitData, "corrupt manifest " + path_.string());
    } else {
      doc_ = {{"run_id", path_.parent_path().filename().string()}, {"tool_version", kToolVersion},
              {"events", nlohmann::json::array()}};
    }
  }

  bool exists() const { return std::filesystem::exists(path_); }
  const nlohmann::json& events() const { return doc_["events"]; }

  // Latest event of a kind, or null.
  nlohmann::json last(std::string_view kind) const {
    const auto& ev = doc_["events"];
    for (auto it = ev.rbegin(); it != ev.rend(); ++it)
      if ((*it).value("event", "") == kind) return *it;
    return nullptr;
  }

  void append(nlohmann::json event) {
    event["time"] = utc_now();
    event["tool_version"] = kToolVersion;
    doc_["events"].push_back(std::move(event));
    auto tmp = path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << doc_.dump(2) << "\n";
      if (!out) throw CommandError(kExitData, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
  }

 private:
  std::filesystem::path path_;
  nlohmann::json doc_;
};

inline std::string store_name(std::string_view model) {
  std::string s(model);
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

// ---- endpoints ----

struct ParsedEndpoint {
  ModelEndpoint endpoint;
  std::map<std::string, std::string> mock_params;  // query of a mock:// URL
  std::string mock_kind;                           // target, judge, down; empty for HTTP
};

inline ParsedEndpoint parse_endpoint(const ModelEndpoint& ep) {
  ParsedEndpoint parsed{ep};
  if (!ep.base_url.starts_with("mock://")) return parsed;
  std::string rest = ep.base_url.substr(7);
  auto q = rest.find('?');
  parsed.mock_kind = rest.substr(0, q);
  if (q != std::string::npos) {
    std::string query = rest.substr(q + 1);
    std::size_t start = 0;
    while (start <= query.size()) {
      auto amp = query.find('&', start);
      std::string kv = query.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
      auto eq = kv.find('=');
      if (!kv.empty()) parsed.mock_params[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
      if (amp == std::string::npos) break;
      start = amp + 1;
    }
  }
  if (parsed.mock_kind != "target" && parsed.mock_kind != "judge" && parsed.mock_kind != "down")
    throw CommandError(kExitUsage, "unknown mock endpoint " + ep.base_url);
  return parsed;
}

inline long mock_param(const ParsedEndpoint& s, const std::string& key, long fallback) {
  auto it = s.mock_params.find(key);
  if (it == s.mock_params.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (const std::exception&) {
    throw CommandError(kExitUsage, "bad value for mock parameter " + key);
  }
}

inline std::unique_ptr<ChatModel> make_model(const ModelEndpoint& ep, const Corpus* corpus,
                                             std::span<const GeneratedProblem> dataset) {
  auto parsed = parse_endpoint(ep);
  if (parsed.mock_kind.empty()) {
    try {
      return std::make_unique<HttpChatModel>(ep);
    } catch (const std::invalid_argument& e) {
      throw CommandError(kExitUsage, e.what());
    }
  }
  if (parsed.mock_kind == "down") return std::make_unique<UnreachableModel>(ep.model_name);
  if (parsed.mock_kind == "judge")
    return std::make_unique<MockJudge>(MockJudgeOptions{static_cast<int>(mock_param(parsed, "malformed", 0))});
  if (!corpus) throw CommandError(kExitData, "mock target needs the corpus recorded at generation");
  MockTargetOptions o;
  o.seed = static_cast<std::uint64_t>(mock_param(parsed, "seed", 0));
  o.latency = std::chrono::milliseconds(mock_param(parsed, "latency_ms", 0));
  o.retest_error_rate = static_cast<double>(mock_param(parsed, "retest_error_pct", 20)) / 100.0;
  return std::make_unique<MockTarget>(*corpus, dataset, o);
}

// ---- generate ----

struct GenerateOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path run_dir;
  GenerationConfig config;
  std::vector<Level> levels{kAllLevels.begin(), kAllLevels.end()};
  std::vector<std::string> template_ids;  // empty = all
  bool skip_infeasible = false;
  bool force = false;
};

inline nlohmann::json to_json(const GenerationConfig& c) {
  return {{"master_seed", c.master_seed},
          {"variants_per_level", c.variants_per_level},
          {"max_attempts", c.max_attempts},
          {"thousands_separator", c.render.thousands_separator}};
}

struct GenerateResult {
  bool up_to_date = false;
  std::size_t problems = 0;
  std::vector<std::filesystem::path> files;
  std::vector<SkippedTemplate> skipped;
};

inline Corpus load_corpus_or_fail(const std::filesystem::path& dir) {
  try {
    return load_corpus(dir);
  } catch (const TemplateError& e) {
    throw CommandError(kExitData, e.what());
  } catch (const std::exception& e) {
    throw CommandError(kExitData, std::string("corpus: ") + e.what());
  }
}

inline GenerateResult cmd_generate(const GenerateOptions& o) {
  RunLock lock(o.run_dir);
  Corpus corpus = load_corpus_or_fail(o.corpus_dir);
  std::vector<ProblemTemplate> selected;
  if (o.template_ids.empty()) {
    selected = corpus.templates;
  } else {
    for (const auto& id : o.template_ids) {
      const auto* t = corpus.find(id);
      if (!t) throw CommandError(kExitData, "no template '" + id + "' in " + o.corpus_dir.string());
      selected.push_back(*t);
    }
  }
  nlohmann::json levels = nlohmann::json::array();
  for (Level l : o.levels) levels.push_back(to_string(l));
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& t : selected) ids.push_back(t.id);
  nlohmann::json inputs{{"corpus_hash", corpus.hash},
                        {"config", to_json(o.config)},
                        {"levels", levels},
                        {"templates", ids},
                        {"skip_infeasible", o.skip_infeasible}};
  std::string inputs_hash = sha256_hex(inputs.dump());

  Manifest manifest(o.run_dir);
  auto dataset_dir = o.run_dir / "dataset";
  if (auto prev = manifest.last("generate"); !prev.is_null()) {
    bool files_intact = true;
    for (const auto& [name, hash] : prev["files"].items())
      if (!std::filesystem::exists(dataset_dir / name) || file_sha256(dataset_dir / name) != hash) files_intact = false;
    if (prev["inputs_hash"] == inputs_hash && files_intact) {
      GenerateResult r;
      r.up_to_date = true;
      for (const auto& [name, hash] : prev["files"].items()) r.files.push_back(dataset_dir / name);
      r.problems = prev.value("problems", std::size_t{0});
      return r;
    }
    if (!o.force)
      throw CommandError(kExitData, o.run_dir.string() +
                                        " already holds a dataset from different inputs; use a new run directory or --force");
  }

  Dataset ds;
  try {
    o.config.check();
    ds = generate_dataset(selected, o.levels, o.config,
                          o.skip_infeasible ? InfeasiblePolicy::SkipAndLog : InfeasiblePolicy::Fail);
  } catch (const InfeasibleTemplate& e) {
    throw CommandError(kExitData, e.what());
  } catch (const std::invalid_argument& e) {
    throw CommandError(kExitUsage, e.what());
  }
  std::filesystem::remove_all(dataset_dir);
  GenerateResult r;
  r.files = write_dataset(dataset_dir, ds);
  r.problems = ds.problems.size();
  r.skipped = ds.skipped;
  nlohmann::json files = nlohmann::json::object();
  for (const auto& f : r.files) files[f.filename().string()] = file_sha256(f);
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : ds.skipped) skipped.push_back({{"template", s.template_id}, {"level", to_string(s.level)}, {"reason", s.reason}});
  manifest.append({{"event", "generate"},
                   {"inputs_hash", inputs_hash},
                   {"corpus_dir", std::filesystem::absolute(o.corpus_dir).string()},
                   {"corpus_hash", corpus.hash},
                   {"config", to_json(o.config)},
                   {"levels", levels},
                   {"templates", ids},
                   {"problems", r.problems},
                   {"files", files},
                   {"skipped", skipped}});
  return r;
}

// Dataset of a run, in (template, level, variant) order.
inline std::vector<GeneratedProblem> load_run_dataset(const std::filesystem::path& run_dir) {
  Manifest m(run_dir);
  auto gen = m.last("generate");
  if (gen.is_null()) throw CommandError(kExitData, run_dir.string() + " has no generated dataset");
  std::vector<GeneratedProblem> out;
  for (const auto& [name, hash] : gen["files"].items()) {
    auto path = run_dir / "dataset" / name;
    if (!std::filesystem::exists(path)) throw CommandError(kExitData, "missing dataset file " + path.string());
    auto part = read_dataset_file(path);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::sort(out.begin(), out.end(), [](const GeneratedProblem& a, const GeneratedProblem& b) {
    return std::tie(a.template_id, a.level, a.variant_index) < std::tie(b.template_id, b.level, b.variant_index);
  });
  return out;
}

inline std::optional<Corpus> load_run_corpus(const std::filesystem::path& run_dir) {
  auto gen = Manifest(run_dir).last("generate");
  if (gen.is_null()) return std::nullopt;
  std::filesystem::path dir = gen.value("corpus_dir", "");
  if (dir.empty() || !std::filesystem::exists(dir)) return std::nullopt;
  auto c = load_corpus_or_fail(dir);
  if (c.hash != gen.value("corpus_hash", "")) throw CommandError(kExitData, "corpus at " + dir.string() + " changed since generation");
  return c;
}

// ---- run ----

struct RunOptions {
  std::filesystem::path run_dir;
  ModelEndpoint target;
  ModelEndpoint judge;
  SamplingParams sampling;
  ExecutorPolicy policy = ExecutorPolicy::BuiltInThenGuest;
  std::vector<std::string> guest_command;  // empty: no guest executor
  std::chrono::milliseconds guest_timeout{5000};
  std::size_t concurrency = 8;
  double max_ungradable_fraction = 0.05;
  int judge_reasks = 2;
  std::ostream* log = nullptr;
};

struct RunResult {
  BatchSummary inference;
  GradingSummary grading;
  std::size_t ungradable_total = 0;
  std::size_t graded_total = 0;
};

inline RunResult cmd_run(const RunOptions& o) {
  RunLock lock(o.run_dir);
  auto dataset = load_run_dataset(o.run_dir);
  if (dataset.empty()) throw CommandError(kExitData, "dataset is empty");
  auto corpus = load_run_corpus(o.run_dir);
  try {
    o.sampling.check();
  } catch (const std::invalid_argument& e) {
    throw CommandError(kExitUsage, e.what());
  }
  auto target = make_model(o.target, corpus ? &*corpus : nullptr, dataset);
  auto judge = make_model(o.judge, nullptr, dataset);
  std::optional<GuestExecutor> guest;
  if (!o.guest_command.empty()) guest.emplace(o.guest_command);

  Manifest manifest(o.run_dir);
  for (const auto& ev : manifest.events()) {
    if (ev.value("event", "") != "run-start" || ev["target"]["model"] != target->model_name()) continue;
    auto prev = ev["sampling"];
    auto now = to_json(o.sampling);
    prev.erase("n_passes");
    now.erase("n_passes");
    if (prev != now)
      throw CommandError(kExitData, target->model_name() + " was already sampled in " + o.run_dir.string() +
                                        " with " + prev.dump() + "; use a new run directory");
  }
  auto inf_path = o.run_dir / "inference" / (store_name(target->model_name()) + ".jsonl");
  auto grade_path = o.run_dir / "grades" / (store_name(target->model_name()) + ".jsonl");
  manifest.append({{"event", "run-start"},
                   {"target", {{"model", target->model_name()}, {"fingerprint", target->fingerprint()}}},
                   {"judge", {{"model", judge->model_name()}, {"fingerprint", judge->fingerprint()}}},
                   {"sampling", to_json(o.sampling)},
                   {"executor_policy", to_string(o.policy)},
                   {"token_count_source", "usage.completion_tokens as reported by the endpoint"},
                   {"files", {std::filesystem::relative(inf_path, o.run_dir).string(),
                              std::filesystem::relative(grade_path, o.run_dir).string()}}});

  RunResult r;
  try {
    r.inference = run_batch(dataset, *target, o.sampling, inf_path, {.concurrency = o.concurrency});
  } catch (const AuthError& e) {
    throw CommandError(kExitEndpoint, std::string("inference stage: authentication failed: ") + e.what());
  } catch (const EndpointUnavailable& e) {
    throw CommandError(kExitEndpoint, std::string("inference stage: endpoint unavailable (resumable): ") + e.what());
  }
  manifest.append({{"event", "inference-complete"},
                   {"model", target->model_name()},
                   {"requested", r.inference.requested},
                   {"fetched", r.inference.fetched},
                   {"failed", r.inference.failed},
                   {"already_done", r.inference.already_done}});

  auto inference = load_inference(inf_path);
  GradingBatchOptions gopts;
  gopts.concurrency = o.concurrency;
  gopts.grade.policy = o.policy;
  gopts.grade.judge_reasks = o.judge_reasks;
  gopts.grade.guest = {guest ? &*guest : nullptr, o.guest_timeout};
  try {
    r.grading = grade_batch(dataset, inference, *judge, grade_path, o.sampling.n_passes, gopts);
  } catch (const AuthError& e) {
    throw CommandError(kExitEndpoint, std::string("grading stage: judge authentication failed: ") + e.what());
  } catch (const EndpointUnavailable& e) {
    throw CommandError(kExitEndpoint, std::string("grading stage: judge unavailable (resumable): ") + e.what());
  }
  auto grades = load_grades(grade_path);
  for (const auto& [k, g] : grades) {
    ++r.graded_total;
    r.ungradable_total += g.verdict == Verdict::Ungradable;
  }
  nlohmann::json by_verdict;
  for (Verdict v : kAllVerdicts) by_verdict[std::string(to_string(v))] = r.grading.by_verdict[static_cast<std::size_t>(v)];
  manifest.append({{"event", "grading-complete"},
                   {"model", target->model_name()},
                   {"graded", r.grading.graded},
                   {"already_done", r.grading.already_done},
                   {"missing_inference", r.grading.missing_inference},
                   {"by_verdict", by_verdict},
                   {"ungradable_total", r.ungradable_total},
                   {"graded_total", r.graded_total}});
  if (r.graded_total &&
      static_cast<double>(r.ungradable_total) / static_cast<double>(r.graded_total) > o.max_ungradable_fraction)
    throw CommandError(kExitThreshold, std::to_string(r.ungradable_total) + " of " + std::to_string(r.graded_total) +
                                           " passes ungradable, above the allowed fraction " +
                                           format_fixed(o.max_ungradable_fraction, 3));
  return r;
}

// ---- report ----

struct ReportOptions {
  std::filesystem::path run_dir;
  bool allow_partial = false;
  std::vector<int> recall_n{1, 8, 32, 48};
};

struct ReportResult {
  RateTable rates;
  std::vector<RecallCell> recall;
  std::vector<std::filesystem::path> files;
  std::string summary;
};

inline std::map<std::string, int> passes_per_model(const Manifest& m) {
  std::map<std::string, int> out;
  for (const auto& ev : m.events())
    if (ev.value("event", "") == "run-start") out[ev["target"]["model"].get<std::string>()] = ev["sampling"]["n_passes"].get<int>();
  return out;
}

inline ReportResult cmd_report(const ReportOptions& o) {
  if (!std::filesystem::exists(o.run_dir / "manifest.json"))
    throw CommandError(kExitData, o.run_dir.string() + " is not a run directory");
  RunLock lock(o.run_dir);
  Manifest manifest(o.run_dir);
  auto dataset = load_run_dataset(o.run_dir);
  auto n_passes = passes_per_model(manifest);
  if (n_passes.empty()) throw CommandError(kExitData, o.run_dir.string() + " has no inference runs to report");

  std::vector<GradedPass> passes;
  std::map<std::string, std::map<PassKey, InferenceRecord>> inference_by_model;
  std::map<std::pair<std::string, Level>, std::size_t> expected;
  std::vector<std::string> incomplete;
  std::size_t failed_inference = 0;
  for (const auto& [model, n] : n_passes) {
    auto grades = load_grades(o.run_dir / "grades" / (store_name(model) + ".jsonl"));
    auto inference = load_inference(o.run_dir / "inference" / (store_name(model) + ".jsonl"));
    for (const auto& p : dataset) expected[{model, p.level}] += static_cast<std::size_t>(n);
    std::size_t want = dataset.size() * static_cast<std::size_t>(n);
    if (grades.size() < want)
      incomplete.push_back(model + ": " + std::to_string(grades.size()) + " of " + std::to_string(want) + " passes graded");
    for (const auto& [k, r] : inference) failed_inference += !r.ok;
    auto joined = join_grades(dataset, grades);
    passes.insert(passes.end(), joined.begin(), joined.end());
    inference_by_model[model] = std::move(inference);
  }
  if (!incomplete.empty() && !o.allow_partial) {
    std::string msg = "grade store incomplete (pass --allow-partial to report anyway):";
    for (const auto& s : incomplete) msg += "\n  " + s;
    throw CommandError(kExitData, msg);
  }

  ReportResult r;
  r.rates = compute_error_rates(passes, expected);
  auto gaps = compute_gaps(r.rates);

  // Recall for models sampled with more than one pass.
  for (const auto& [model, n] : n_passes) {
    if (n < 2) continue;
    std::vector<int> ns;
    for (int v : o.recall_n)
      if (v <= n) ns.push_back(v);
    std::vector<GradedPass> mine;
    for (const auto& p : passes)
      if (p.model == model) mine.push_back(p);
    try {
      auto cells = recall_at_n(mine, ns);
      r.recall.insert(r.recall.end(), cells.begin(), cells.end());
    } catch (const InsufficientPasses& e) {
      if (!o.allow_partial) throw CommandError(kExitData, e.what());
    }
  }

  std::vector<TokenCell> tokens;
  for (const auto& [model, records] : inference_by_model) {
    auto cells = token_stats(dataset, records);
    tokens.insert(tokens.end(), cells.begin(), cells.end());
  }

  std::vector<NumeralCorpusItem> numeral_items;
  for (const auto& p : dataset) numeral_items.push_back({p.question_text, p.ground_truth.str()});
  auto numdist = numeral_distribution(numeral_items);

  auto report_dir = o.run_dir / "report";
  auto emit = [&](const std::string& name, const std::string& text) {
    detail::write_text(report_dir / name, text);
    r.files.push_back(report_dir / name);
  };
  emit("rates.csv", rates_csv(r.rates));
  emit("gaps.csv", gaps_csv(gaps));
  emit("recall.csv", recall_csv(r.recall));
  emit("tokens.csv", tokens_csv(tokens));
  emit("numdist.csv", numdist_csv(numdist));

  std::vector<RetestCell> retest_cells;
  for (const auto& [model, n] : n_passes) {
    auto c = read_jsonl(o.run_dir / "retest" / (store_name(model) + ".jsonl"));
    std::vector<RetestOutcome> outcomes;
    for (const auto& j : c.records) {
      RetestOutcome out;
      out.instance.model = model;
      out.instance.level = parse_level(j.at("level").get<std::string>()).value_or(Level::Original);
      out.correct = j.at("correct").get<bool>();
      out.no_numeric = j.at("no_numeric").get<bool>();
      outcomes.push_back(out);
    }
    auto cells = tabulate_retest(outcomes);
    retest_cells.insert(retest_cells.end(), cells.begin(), cells.end());
  }
  emit("arith_retest.csv", retest_csv(retest_cells));

  nlohmann::json gaps_j = nlohmann::json::array();
  for (const auto& g : gaps)
    gaps_j.push_back({{"model", g.model},
                      {"l6_minus_l1_logical_pp", g.l6_minus_l1 ? nlohmann::json(*g.l6_minus_l1) : nlohmann::json()},
                      {"l1_minus_baseline_logical_pp", g.l1_minus_baseline ? nlohmann::json(*g.l1_minus_baseline) : nlohmann::json()}});
  nlohmann::json recall_j = nlohmann::json::array();
  for (const auto& c : r.recall)
    recall_j.push_back({{"model", c.model}, {"level", to_string(c.level)}, {"n", c.n}, {"recall_pct", c.recall}, {"questions", c.questions}});
  nlohmann::json tokens_j = nlohmann::json::array();
  for (const auto& c : tokens)
    tokens_j.push_back({{"model", c.model}, {"level", to_string(c.level)},
                        {"mean_completion_tokens", c.mean_completion_tokens ? nlohmann::json(*c.mean_completion_tokens) : nlohmann::json()},
                        {"records", c.records}, {"missing_usage", c.missing_usage}});
  nlohmann::json numdist_j = nlohmann::json::array();
  for (std::size_t i = 0; i < numdist.thresholds.size(); ++i)
    numdist_j.push_back({{"threshold", numdist.thresholds[i].str()}, {"count_below", numdist.below[i]}});
  nlohmann::json report{{"rates", to_json(r.rates)},
                        {"gaps", gaps_j},
                        {"recall", recall_j},
                        {"tokens", tokens_j},
                        {"numdist", {{"total", numdist.total}, {"thresholds", numdist_j}}},
                        {"failed_inference_records", failed_inference},
                        {"partial", !incomplete.empty()},
                        {"incomplete", incomplete}};
  emit("report.json", report.dump(2) + "\n");

  std::string summary;
  for (Verdict v : kAllVerdicts) summary += render_rate_table(r.rates, v) + "\n";
  if (!r.recall.empty()) {
    summary += "recall@n %\n";
    for (const auto& c : r.recall)
      summary += "  " + c.model + " " + std::string(to_string(c.level)) + " n=" + std::to_string(c.n) + ": " +
                 format_fixed(c.recall) + "\n";
  }
  summary += "failed inference records: " + std::to_string(failed_inference) + "\n";
  if (!incomplete.empty()) {
    summary += "PARTIAL REPORT\n";
    for (const auto& s : incomplete) summary += "  " + s + "\n";
  }
  emit("summary.txt", summary);
  r.summary = summary;

  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : r.files) files.push_back(std::filesystem::relative(f, o.run_dir).string());
  manifest.append({{"event", "report"}, {"files", files}, {"partial", !incomplete.empty()}});
  return r;
}

// ---- arithmetic retest ----

struct RetestOptions {
  std::filesystem::path run_dir;
  ModelEndpoint target;
  ModelEndpoint judge;
  std::size_t concurrency = 8;
};

struct RetestResult {
  MiningResult mined;
  std::vector<RetestCell> cells;
};

inline RetestResult cmd_retest_arith(const RetestOptions& o) {
  RunLock lock(o.run_dir);
  auto dataset = load_run_dataset(o.run_dir);
  auto corpus = load_run_corpus(o.run_dir);
  auto target = make_model(o.target, corpus ? &*corpus : nullptr, dataset);
  auto judge = make_model(o.judge, nullptr, dataset);
  auto name = store_name(target->model_name());
  auto grades = load_grades(o.run_dir / "grades" / (name + ".jsonl"));
  auto inference = load_inference(o.run_dir / "inference" / (name + ".jsonl"));
  if (grades.empty()) throw CommandError(kExitData, "no grades for " + target->model_name());
  RetestResult r;
  try {
    r.mined = mine_arithmetic_errors(dataset, grades, inference, *judge);
    std::vector<RetestOutcome> outcomes;
    if (!r.mined.instances.empty()) outcomes = standalone_retest(r.mined.instances, *target, o.concurrency);
    r.cells = tabulate_retest(outcomes);
    auto path = o.run_dir / "retest" / (name + ".jsonl");
    std::filesystem::remove(path);
    JsonlAppender store(path);
    for (const auto& out : outcomes)
      store.append({{"instance_key", out.instance.instance_key},
                    {"pass_index", out.instance.pass_index},
                    {"level", to_string(out.instance.level)},
                    {"expression", out.instance.expression},
                    {"claimed", to_json_number(out.instance.claimed)},
                    {"exact", to_json_number(out.instance.correct)},
                    {"reply", out.reply},
                    {"answered", out.answered ? to_json_number(*out.answered) : nlohmann::json()},
                    {"correct", out.correct},
                    {"no_numeric", out.no_numeric}});
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : r.mined.skipped)
      skipped.push_back({{"instance_key", s.instance_key}, {"pass_index", s.pass_index}, {"reason", s.reason}});
    Manifest(o.run_dir).append({{"event", "retest-arith"},
                                {"model", target->model_name()},
                                {"instances", r.mined.instances.size()},
                                {"skipped", skipped},
                                {"files", {std::filesystem::relative(path, o.run_dir).string()}}});
  } catch (const AuthError& e) {
    throw CommandError(kExitEndpoint, std::string("retest: authentication failed: ") + e.what());
  } catch (const EndpointUnavailable& e) {
    throw CommandError(kExitEndpoint, std::string("retest: endpoint unavailable: ") + e.what());
  }
  return r;
}

}  // namespace gsmr
