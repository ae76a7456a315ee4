#pragma once

// Constraint-satisfying numeric perturbation of problem templates.

#include "gsmr/hashing.hpp"
#include "gsmr/numeric.hpp"
#include "gsmr/templates.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace gsmr {

enum class Level { Original, L1, L2, L3, L4, L5, L6 };

inline constexpr std::array<Level, 6> kPerturbedLevels{Level::L1, Level::L2, Level::L3,
                                                       Level::L4, Level::L5, Level::L6};
inline constexpr std::array<Level, 7> kAllLevels{Level::Original, Level::L1, Level::L2, Level::L3,
                                                 Level::L4,       Level::L5, Level::L6};

inline std::string_view to_string(Level l) {
  switch (l) {
    case Level::Original: return "original";
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::L3: return "L3";
    case Level::L4: return "L4";
    case Level::L5: return "L5";
    case Level::L6: return "L6";
  }
  return "?";
}

inline std::optional<Level> parse_level(std::string_view s) {
  for (Level l : kAllLevels)
    if (to_string(l) == s) return l;
  if (s == "baseline") return Level::Original;
  return std::nullopt;
}

// Half-open [lo, hi) for the decade levels.
struct LevelRange {
  std::uint64_t lo;
  std::uint64_t hi;
  bool contains(const Integer& v) const { return v >= lo && v < hi; }
};

inline std::optional<LevelRange> level_range(Level l) {
  switch (l) {
    case Level::L2: return LevelRange{100, 1'000};
    case Level::L3: return LevelRange{1'000, 10'000};
    case Level::L4: return LevelRange{10'000, 100'000};
    case Level::L5: return LevelRange{100'000, 1'000'000};
    case Level::L6: return LevelRange{1'000'000, 10'000'000};
    default: return std::nullopt;
  }
}

struct GenerationConfig {
  std::uint64_t master_seed = 0;
  std::size_t variants_per_level = 50;
  std::size_t max_attempts = 10'000;
  RenderOptions render;
  std::size_t threads = 0;  // 0: hardware concurrency

  void check() const {
    if (variants_per_level < 1) throw std::invalid_argument("variants_per_level must be >= 1");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  }
};

struct GeneratedProblem {
  std::string template_id;
  Level level = Level::Original;
  std::size_t variant_index = 0;
  std::vector<Integer> values;
  std::string question_text;
  Integer ground_truth;
  std::vector<Integer> intermediates;

  std::string instance_key() const {
    return template_id + "/" + std::string(to_string(level)) + "/" + std::to_string(variant_index);
  }
};

struct InfeasibleTemplate : std::runtime_error {
  InfeasibleTemplate(std::string id, Level level, std::size_t attempts)
      : std::runtime_error("template '" + id + "' infeasible at level " + std::string(to_string(level)) +
                           " after " + std::to_string(attempts) + " attempts"),
        template_id(std::move(id)),
        level(level) {}
  std::string template_id;
  Level level;
};

// Unbiased draw from [0, n) by rejection on the top of the 64-bit range.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("empty range");
  std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  for (;;) {
    std::uint64_t x = rng();
    if (x < limit) return x % n;
  }
}

// Same-digit candidate range for an original value: [1, 9] for one digit,
// [10^(d-1), 10^d) otherwise.
inline LevelRange same_digit_range(const Integer& original) {
  int d = digit_count(original);
  if (d > 18) throw std::invalid_argument("slot values above 18 digits are not supported");
  if (d == 1) return {1, 10};
  std::uint64_t lo = 1;
  for (int i = 1; i < d; ++i) lo *= 10;
  return {lo, lo * 10};
}

inline bool same_digit_class(const Integer& value, const Integer& original) {
  return same_digit_range(original).contains(value);
}

inline Integer sample_same_digit(std::mt19937_64& rng, const Integer& original, bool exclude_original) {
  LevelRange r = same_digit_range(original);
  std::uint64_t n = r.hi - r.lo;
  if (!exclude_original || !r.contains(original)) return Integer(r.lo + uniform_below(rng, n));
  // Skip over the original by index so no rejection is needed.
  std::uint64_t orig = static_cast<std::uint64_t>(original);
  std::uint64_t v = r.lo + uniform_below(rng, n - 1);
  if (v >= orig) ++v;
  return Integer(v);
}

inline std::vector<Integer> sample_values(const ProblemTemplate& t, Level level, std::mt19937_64& rng) {
  if (level == Level::Original) throw std::invalid_argument("sample_values: level must be perturbed");
  auto range = level_range(level);
  std::vector<Integer> values;
  values.reserve(t.slots.size());
  for (const auto& slot : t.slots) {
    if (slot.role == SlotRole::Fixed) {
      values.push_back(slot.original_value);
    } else if (level == Level::L1) {
      values.push_back(sample_same_digit(rng, slot.original_value, true));
    } else if (slot.role == SlotRole::Scaled) {
      values.push_back(Integer(range->lo + uniform_below(rng, range->hi - range->lo)));
    } else {
      values.push_back(sample_same_digit(rng, slot.original_value, false));
    }
  }
  return values;
}

struct Violation {
  enum class Kind { MissingValue, NegativeStep, FixedChanged, DigitCount, SameAsOriginal, OutOfRange };
  Kind kind;
  std::string subject;  // step name or slot name
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::optional<EvaluationTrace> trace;
  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_instance(const ProblemTemplate& t, Level level, std::span<const Integer> values) {
  ValidationReport report;
  using K = Violation::Kind;
  if (values.size() < t.slots.size()) {
    report.violations.push_back({K::MissingValue, slot_name(values.size()), "no value supplied"});
    return report;
  }
  auto range = level_range(level);
  for (const auto& slot : t.slots) {
    const Integer& v = values[slot.index];
    std::string name = slot_name(slot.index);
    if (v < 0) report.violations.push_back({K::OutOfRange, name, "negative slot value " + v.str()});
    if (level == Level::Original || slot.role == SlotRole::Fixed) {
      if (v != slot.original_value)
        report.violations.push_back({K::FixedChanged, name,
                                     v.str() + " differs from original " + slot.original_value.str()});
      continue;
    }
    if (level == Level::L1 || slot.role == SlotRole::Held) {
      if (!same_digit_class(v, slot.original_value))
        report.violations.push_back({K::DigitCount, name,
                                     v.str() + " does not have the digit count of " + slot.original_value.str()});
      if (level == Level::L1 && v == slot.original_value)
        report.violations.push_back({K::SameAsOriginal, name, "equals original value " + v.str()});
    } else if (!range->contains(v)) {
      report.violations.push_back({K::OutOfRange, name,
                                   v.str() + " outside [" + std::to_string(range->lo) + ", " +
                                       std::to_string(range->hi) + ")"});
    }
  }
  EvaluationTrace trace = evaluate_program(t.answer_program, values);
  for (const auto& [step, v] : trace.intermediates) {
    if (v < 0) {
      bool final = step == t.answer_program.result_ref;
      report.violations.push_back(
          {K::NegativeStep, step, std::string(final ? "negative final answer " : "negative intermediate ") + v.str()});
    }
  }
  report.trace = std::move(trace);
  return report;
}

inline std::mt19937_64 instance_stream(std::uint64_t master_seed, std::string_view template_id, Level level,
                                       std::size_t variant_index) {
  Digest d = Sha256()
                 .field("gsmr-instance-v1")
                 .field(std::to_string(master_seed))
                 .field(template_id)
                 .field(to_string(level))
                 .field(std::to_string(variant_index))
                 .finish();
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < 8; ++i)
    words[i] = static_cast<std::uint32_t>(d[4 * i]) | static_cast<std::uint32_t>(d[4 * i + 1]) << 8 |
               static_cast<std::uint32_t>(d[4 * i + 2]) << 16 | static_cast<std::uint32_t>(d[4 * i + 3]) << 24;
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

inline GeneratedProblem make_problem(const ProblemTemplate& t, Level level, std::size_t variant_index,
                                     std::vector<Integer> values, const EvaluationTrace& trace,
                                     const RenderOptions& render) {
  GeneratedProblem p;
  p.template_id = t.id;
  p.level = level;
  p.variant_index = variant_index;
  p.question_text = render_question(t, values, render);
  p.values = std::move(values);
  p.ground_truth = trace.final;
  for (const auto& [_, v] : trace.intermediates) p.intermediates.push_back(v);
  return p;
}

inline GeneratedProblem original_instance(const ProblemTemplate& t, const RenderOptions& render = {}) {
  auto values = t.original_values();
  auto trace = evaluate_program(t.answer_program, values);
  return make_problem(t, Level::Original, 0, std::move(values), trace, render);
}

inline GeneratedProblem generate_instance(const ProblemTemplate& t, Level level, std::size_t variant_index,
                                          const GenerationConfig& config) {
  if (level == Level::Original) throw std::invalid_argument("generate_instance: use original_instance");
  config.check();
  auto rng = instance_stream(config.master_seed, t.id, level, variant_index);
  for (std::size_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    auto values = sample_values(t, level, rng);
    auto report = validate_instance(t, level, values);
    if (report.ok()) return make_problem(t, level, variant_index, std::move(values), *report.trace, config.render);
  }
  throw InfeasibleTemplate(t.id, level, config.max_attempts);
}

struct SkippedTemplate {
  std::string template_id;
  Level level;
  std::string reason;
};

struct Dataset {
  std::vector<GeneratedProblem> problems;  // order: (template, level, variant)
  std::vector<SkippedTemplate> skipped;
};

enum class InfeasiblePolicy { Fail, SkipAndLog };

inline Dataset generate_dataset(std::span<const ProblemTemplate> templates, std::span<const Level> levels,
                                const GenerationConfig& config,
                                InfeasiblePolicy policy = InfeasiblePolicy::Fail) {
  if (templates.empty()) throw std::invalid_argument("generate_dataset: no templates");
  config.check();

  struct Job {
    std::size_t template_pos;
    Level level;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < templates.size(); ++i)
    for (Level l : kAllLevels)
      if (l == Level::Original || std::find(levels.begin(), levels.end(), l) != levels.end())
        jobs.push_back({i, l});

  std::vector<std::vector<GeneratedProblem>> out(jobs.size());
  std::vector<std::optional<std::string>> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& t = templates[jobs[j].template_pos];
      try {
        if (jobs[j].level == Level::Original) {
          out[j].push_back(original_instance(t, config.render));
          continue;
        }
        for (std::size_t v = 0; v < config.variants_per_level; ++v)
          out[j].push_back(generate_instance(t, jobs[j].level, v, config));
      } catch (const InfeasibleTemplate& e) {
        out[j].clear();
        errors[j] = e.what();
      }
    }
  };
  std::size_t n_threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, jobs.size());
  std::vector<std::jthread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();

  Dataset ds;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (errors[j]) {
      if (policy == InfeasiblePolicy::Fail)
        throw InfeasibleTemplate(templates[jobs[j].template_pos].id, jobs[j].level, config.max_attempts);
      ds.skipped.push_back({templates[jobs[j].template_pos].id, jobs[j].level, *errors[j]});
      continue;
    }
    for (auto& p : out[j]) ds.problems.push_back(std::move(p));
  }
  return ds;
}

// --- dataset files -------------------------------------------------------

inline nlohmann::json to_json(const GeneratedProblem& p) {
  nlohmann::json values = nlohmann::json::array();
  for (const auto& v : p.values) values.push_back(to_json_number(v));
  nlohmann::json inter = nlohmann::json::array();
  for (const auto& v : p.intermediates) inter.push_back(to_json_number(v));
  return {{"instance_key", p.instance_key()},
          {"template_id", p.template_id},
          {"level", std::string(to_string(p.level))},
          {"variant_index", p.variant_index},
          {"values", values},
          {"question", p.question_text},
          {"ground_truth", to_json_number(p.ground_truth)},
          {"intermediates", inter}};
}

inline GeneratedProblem problem_from_json(const nlohmann::json& j) {
  GeneratedProblem p;
  p.template_id = j.at("template_id").get<std::string>();
  auto level = parse_level(j.at("level").get<std::string>());
  if (!level) throw std::invalid_argument("unknown level " + j.at("level").dump());
  p.level = *level;
  p.variant_index = j.at("variant_index").get<std::size_t>();
  for (const auto& v : j.at("values")) p.values.push_back(integer_from_json(v));
  p.question_text = j.at("question").get<std::string>();
  p.ground_truth = integer_from_json(j.at("ground_truth"));
  for (const auto& v : j.at("intermediates")) p.intermediates.push_back(integer_from_json(v));
  if (j.at("instance_key").get<std::string>() != p.instance_key())
    throw std::invalid_argument("instance_key mismatch for " + p.instance_key());
  return p;
}

inline std::filesystem::path level_file(const std::filesystem::path& dataset_dir, Level l) {
  return dataset_dir / (std::string(to_string(l)) + ".jsonl");
}

// One file per level present in the dataset, records in (template, variant) order.
inline std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dataset_dir, const Dataset& ds) {
  std::filesystem::create_directories(dataset_dir);
  std::vector<std::filesystem::path> written;
  for (Level l : kAllLevels) {
    std::string body;
    bool any = false;
    for (const auto& p : ds.problems) {
      if (p.level != l) continue;
      body += to_json(p).dump() + "\n";
      any = true;
    }
    if (!any) continue;
    auto path = level_file(dataset_dir, l);
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << body;
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    written.push_back(path);
  }
  return written;
}

inline std::vector<GeneratedProblem> read_dataset_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<GeneratedProblem> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(problem_from_json(nlohmann::json::parse(line)));
  return out;
}

// Reads all level files in canonical (template, level, variant) order.
inline std::vector<GeneratedProblem> read_dataset(const std::filesystem::path& dataset_dir) {
  std::vector<GeneratedProblem> all;
  for (Level l : kAllLevels) {
    auto f = level_file(dataset_dir, l);
    if (!std::filesystem::exists(f)) continue;
    auto part = read_dataset_file(f);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::stable_sort(all.begin(), all.end(), [](const GeneratedProblem& a, const GeneratedProblem& b) {
    if (a.template_id != b.template_id) return a.template_id < b.template_id;
    if (a.level != b.level) return a.level < b.level;
    return a.variant_index < b.variant_index;
  });
  return all;
}

}  // namespace gsmr
