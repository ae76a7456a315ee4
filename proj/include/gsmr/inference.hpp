#pragma once

// Target-model inference: prompt construction, multi-pass batches, resumable
// JSON-lines persistence.

#include "gsmr/chat.hpp"
#include "gsmr/jsonl_store.hpp"
#include "gsmr/perturb.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <thread>

namespace gsmr {

inline std::string build_prompt(std::string_view question) {
  if (question.empty()) throw std::invalid_argument("question is empty");
  std::string p =
      "As an expert problem solver, solve the following mathematical question step by step.\n"
      "Q: ";
  p += question;
  p += "\nA: Let's think step by step.";
  return p;
}

struct SamplingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  int n_passes = 1;

  static SamplingParams greedy() { return {}; }
  static SamplingParams recall(int n_passes) { return {0.8, 0.95, 2048, n_passes}; }

  void check() const {
    if (!(temperature >= 0)) throw std::invalid_argument("temperature must be >= 0");
    if (!(top_p > 0 && top_p <= 1)) throw std::invalid_argument("top_p must be in (0, 1]");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
    if (n_passes < 1) throw std::invalid_argument("n_passes must be >= 1");
  }
};

inline nlohmann::json to_json(const SamplingParams& s) {
  return {{"temperature", s.temperature}, {"top_p", s.top_p}, {"max_tokens", s.max_tokens}, {"n_passes", s.n_passes}};
}

struct InferenceRecord {
  std::string instance_key;
  int pass_index = 0;
  std::string model;
  std::string prompt;
  std::string response;
  std::optional<std::uint64_t> completion_tokens;
  std::uint64_t latency_ms = 0;
  std::string fingerprint;
  bool ok = true;
  std::string error;
  int attempts = 1;
};

inline nlohmann::json to_json(const InferenceRecord& r) {
  nlohmann::json j{{"instance_key", r.instance_key},
                   {"pass_index", r.pass_index},
                   {"model", r.model},
                   {"prompt", r.prompt},
                   {"response", r.response},
                   {"completion_tokens", nullptr},
                   {"latency_ms", r.latency_ms},
                   {"fingerprint", r.fingerprint},
                   {"status", r.ok ? "ok" : "failed"},
                   {"error", r.error},
                   {"attempts", r.attempts}};
  if (r.completion_tokens) j["completion_tokens"] = *r.completion_tokens;
  return j;
}

inline InferenceRecord inference_from_json(const nlohmann::json& j) {
  InferenceRecord r;
  r.instance_key = j.at("instance_key").get<std::string>();
  r.pass_index = j.at("pass_index").get<int>();
  r.model = j.at("model").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.response = j.at("response").get<std::string>();
  if (!j.at("completion_tokens").is_null()) r.completion_tokens = j["completion_tokens"].get<std::uint64_t>();
  r.latency_ms = j.value("latency_ms", std::uint64_t{0});
  r.fingerprint = j.value("fingerprint", std::string());
  r.ok = j.at("status").get<std::string>() == "ok";
  r.error = j.value("error", std::string());
  r.attempts = j.value("attempts", 1);
  return r;
}

using PassKey = std::pair<std::string, int>;  // (instance_key, pass_index)

// One record per (instance, pass): a successful record wins over failures,
// the first success over later duplicates.
inline std::map<PassKey, InferenceRecord> load_inference(const std::filesystem::path& path,
                                                         std::size_t* malformed = nullptr) {
  auto contents = read_jsonl(path);
  if (malformed) *malformed = contents.malformed_lines;
  std::map<PassKey, InferenceRecord> out;
  for (const auto& j : contents.records) {
    InferenceRecord r;
    try {
      r = inference_from_json(j);
    } catch (const std::exception&) {
      if (malformed) ++*malformed;
      continue;
    }
    PassKey k{r.instance_key, r.pass_index};
    auto it = out.find(k);
    if (it == out.end()) out.emplace(k, std::move(r));
    else if (!it->second.ok) it->second = std::move(r);
  }
  return out;
}

struct BatchSummary {
  std::size_t requested = 0;  // |dataset| x n_passes
  std::size_t already_done = 0;
  std::size_t fetched = 0;
  std::size_t failed = 0;
};

struct BatchOptions {
  std::size_t concurrency = 8;
  std::function<void(const InferenceRecord&)> on_record;
};

// Fetches every (problem, pass) without a successful record in `store_path`.
// AuthError and EndpointUnavailable stop the batch (after in-flight requests
// finish) and propagate; everything persisted so far stays valid for resume.
inline BatchSummary run_batch(std::span<const GeneratedProblem> dataset, ChatModel& model,
                              const SamplingParams& params, const std::filesystem::path& store_path,
                              const BatchOptions& options = {}) {
  params.check();
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");
  auto done = load_inference(store_path);

  BatchSummary summary;
  struct Job {
    const GeneratedProblem* problem;
    int pass;
  };
  std::vector<Job> jobs;
  for (const auto& p : dataset) {
    for (int pass = 0; pass < params.n_passes; ++pass) {
      ++summary.requested;
      auto it = done.find({p.instance_key(), pass});
      if (it != done.end() && it->second.ok) ++summary.already_done;
      else jobs.push_back({&p, pass});
    }
  }
  if (jobs.empty()) return summary;

  JsonlAppender store(store_path);
  std::atomic<std::size_t> next{0}, fetched{0}, failed{0};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr fatal;

  auto worker = [&] {
    while (!abort) {
      std::size_t i = next++;
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      InferenceRecord rec;
      rec.instance_key = job.problem->instance_key();
      rec.pass_index = job.pass;
      rec.model = model.model_name();
      rec.fingerprint = model.fingerprint();
      rec.prompt = build_prompt(job.problem->question_text);
      ChatRequest req{model.model_name(), {{"user", rec.prompt}}, params.temperature, params.top_p, params.max_tokens};
      if (params.temperature > 0) req.seed = static_cast<std::uint64_t>(job.pass);
      try {
        auto resp = model.complete(req);
        rec.response = std::move(resp.content);
        rec.completion_tokens = resp.completion_tokens;
        rec.latency_ms = resp.latency_ms;
        rec.attempts = resp.attempts;
        ++fetched;
      } catch (const RequestFailed& e) {
        rec.ok = false;
        rec.error = e.what();
        rec.attempts = e.attempts;
        ++failed;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      }
      store.append(to_json(rec));
      if (options.on_record) options.on_record(rec);
    }
  };
  {
    std::vector<std::jthread> pool;
    std::size_t n = std::max<std::size_t>(1, std::min(options.concurrency, jobs.size()));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  summary.fetched = fetched;
  summary.failed = failed;
  if (fatal) std::rethrow_exception(fatal);
  return summary;
}

}  // namespace gsmr
