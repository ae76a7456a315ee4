#pragma once

#include "gsmr/perturb.hpp"
#include "gsmr/templates.hpp"

#include <filesystem>
#include <string>

namespace gsmr::testing {

inline std::filesystem::path corpus_dir() { return GSMR_CORPUS_DIR; }

inline const Corpus& bundled_corpus() {
  static const Corpus c = load_corpus(corpus_dir());
  return c;
}

inline const ProblemTemplate& corpus_template(std::string_view id) {
  const auto* t = bundled_corpus().find(id);
  if (!t) throw std::runtime_error("no template " + std::string(id));
  return *t;
}

inline std::vector<Integer> ints(std::initializer_list<long long> v) {
  std::vector<Integer> out;
  for (auto x : v) out.emplace_back(x);
  return out;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gsmr_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Instance of a bundled template at explicit values (Level 6 by default).
inline GeneratedProblem instance_at(std::string_view id, std::initializer_list<long long> values,
                                    Level level = Level::L6) {
  const auto& t = corpus_template(id);
  auto v = ints(values);
  auto trace = evaluate_program(t.answer_program, v);
  return make_problem(t, level, 0, v, trace, {});
}

}  // namespace gsmr::testing
