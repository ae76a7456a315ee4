#include "gsmr/perturb.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <set>

#include "test_support.hpp"

namespace gsmr {
namespace {

using testing::corpus_template;
using testing::ints;

ProblemTemplate subtraction_template(const char* role_a, const char* a_value, const char* role_b, const char* b_value) {
  std::string src = std::string("id: sub\nquestion: {0} minus {1}\nslot s0 = ") + a_value + " " + role_a +
                    "\nslot s1 = " + b_value + " " + role_b + "\nstep remaining := s0 - s1\nanswer: remaining\n";
  return parse_template(src);
}

TEST(LevelRange, DisjointDecades) {
  std::uint64_t prev_hi = 100;
  for (Level l : {Level::L2, Level::L3, Level::L4, Level::L5, Level::L6}) {
    auto r = level_range(l);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->lo, prev_hi);
    EXPECT_EQ(r->hi, r->lo * 10);
    prev_hi = r->hi;
  }
  EXPECT_EQ(level_range(Level::L6)->hi, 10'000'000u);
  EXPECT_FALSE(level_range(Level::L1));
  EXPECT_FALSE(level_range(Level::Original));
}

TEST(SampleValues, LevelOneSingleDigitExcludesOriginal) {
  auto t = parse_template("id: one\nquestion: {0}\nslot s0 = 5 scaled\nstep x := s0\nanswer: x\n");
  std::mt19937_64 rng(7);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    auto v = sample_values(t, Level::L1, rng);
    int x = static_cast<int>(v[0]);
    ASSERT_GE(x, 1);
    ASSERT_LE(x, 9);
    ASSERT_NE(x, 5);
    seen.insert(x);
  }
  EXPECT_EQ(seen, (std::set<int>{1, 2, 3, 4, 6, 7, 8, 9}));
}

TEST(SampleValues, LevelSixScaledInRangeHeldSameDigitFixedKept) {
  const auto& t = corpus_template("judy");
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    auto v = sample_values(t, Level::L6, rng);
    for (int s : {0, 1}) {
      EXPECT_GE(v[s], 1'000'000);
      EXPECT_LT(v[s], 10'000'000);
    }
    for (int s : {2, 3}) {
      EXPECT_GE(v[s], 10);
      EXPECT_LT(v[s], 100);
    }
    EXPECT_EQ(v[4], 1);
  }
}

TEST(ValidateInstance, TableOneValuesAreAdmissible) {
  const auto& t = corpus_template("judy");
  auto report = validate_instance(t, Level::L6, ints({3124213, 7832129, 25, 35, 1}));
  EXPECT_TRUE(report.ok());
  ASSERT_TRUE(report.trace);
  EXPECT_EQ(report.trace->intermediates.size(), 4u);
  for (const auto& [_, v] : report.trace->intermediates) EXPECT_GE(v, 0);
  EXPECT_EQ(report.trace->final, Integer("20521544750"));
}

TEST(ValidateInstance, NegativeStepIsNamed) {
  auto t = subtraction_template("scaled", "50", "scaled", "20");
  auto report = validate_instance(t, Level::L2, ints({150, 900}));
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].kind, Violation::Kind::NegativeStep);
  EXPECT_EQ(report.violations[0].subject, "remaining");
}

TEST(ValidateInstance, LevelOneIdentityAndDigitViolations) {
  const auto& t = corpus_template("judy");
  auto report = validate_instance(t, Level::L1, ints({5, 7, 21, 150, 1}));
  std::set<std::pair<Violation::Kind, std::string>> got;
  for (const auto& v : report.violations) got.insert({v.kind, v.subject});
  EXPECT_TRUE(got.count({Violation::Kind::SameAsOriginal, "s0"}));
  EXPECT_TRUE(got.count({Violation::Kind::DigitCount, "s3"}));
  EXPECT_EQ(got.size(), 2u);
}

TEST(ValidateInstance, RangeAndFixedViolations) {
  const auto& t = corpus_template("judy");
  auto report = validate_instance(t, Level::L3, ints({999, 1000, 15, 15, 2}));
  std::set<std::pair<Violation::Kind, std::string>> got;
  for (const auto& v : report.violations) got.insert({v.kind, v.subject});
  EXPECT_TRUE(got.count({Violation::Kind::OutOfRange, "s0"}));
  EXPECT_TRUE(got.count({Violation::Kind::FixedChanged, "s4"}));
  EXPECT_EQ(got.size(), 2u);
}

TEST(GenerateInstance, Deterministic) {
  GenerationConfig cfg{.master_seed = 42};
  const auto& t = corpus_template("judy");
  auto a = generate_instance(t, Level::L6, 0, cfg);
  auto b = generate_instance(t, Level::L6, 0, cfg);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(a.instance_key(), "judy/L6/0");
  auto c = generate_instance(t, Level::L6, 1, cfg);
  EXPECT_NE(a.values, c.values);
  cfg.master_seed = 43;
  EXPECT_NE(generate_instance(t, Level::L6, 0, cfg).values, a.values);
}

TEST(GenerateInstance, SubtractionAtLevelTwoFindsAdmissiblePair) {
  // Enumeration oracle: admissible (a, b) pairs with a >= b exist in [100, 1000)^2.
  std::size_t admissible = 0;
  for (int a = 100; a < 1000; ++a)
    for (int b = 100; b < 1000; ++b) admissible += a >= b;
  ASSERT_EQ(admissible, 405450u);

  auto t = subtraction_template("scaled", "50", "scaled", "20");
  GenerationConfig cfg{.master_seed = 1};
  for (std::size_t v = 0; v < 50; ++v) {
    auto p = generate_instance(t, Level::L2, v, cfg);
    EXPECT_GE(p.values[0], p.values[1]);
    EXPECT_GE(p.ground_truth, 0);
  }
}

TEST(GenerateInstance, InfeasibleTemplate) {
  auto t = subtraction_template("held", "5", "scaled", "3");
  GenerationConfig cfg{.master_seed = 1};
  try {
    generate_instance(t, Level::L6, 0, cfg);
    FAIL();
  } catch (const InfeasibleTemplate& e) {
    EXPECT_EQ(e.template_id, "sub");
    EXPECT_EQ(e.level, Level::L6);
    EXPECT_NE(std::string(e.what()).find("10000 attempts"), std::string::npos);
  }
}

TEST(GenerateDataset, CountsAndOrder) {
  GenerationConfig cfg{.master_seed = 5, .variants_per_level = 1};
  std::vector<ProblemTemplate> one{corpus_template("finn")};
  std::vector<Level> levels{Level::L3};
  auto ds = generate_dataset(one, levels, cfg);
  ASSERT_EQ(ds.problems.size(), 2u);
  EXPECT_EQ(ds.problems[0].level, Level::Original);
  EXPECT_EQ(ds.problems[1].level, Level::L3);

  cfg.variants_per_level = 7;
  const auto& all = testing::bundled_corpus().templates;
  auto full = generate_dataset(all, kPerturbedLevels, cfg);
  EXPECT_EQ(full.problems.size(), all.size() * (6 * 7 + 1));
  std::set<std::string> keys;
  for (const auto& p : full.problems) EXPECT_TRUE(keys.insert(p.instance_key()).second) << p.instance_key();
  EXPECT_TRUE(std::is_sorted(full.problems.begin(), full.problems.end(), [](const auto& a, const auto& b) {
    return std::tie(a.template_id, a.level, a.variant_index) < std::tie(b.template_id, b.level, b.variant_index);
  }));
}

TEST(GenerateDataset, VariantAloneEqualsVariantInFullRun) {
  GenerationConfig cfg{.master_seed = 99, .variants_per_level = 40, .threads = 4};
  const auto& all = testing::bundled_corpus().templates;
  auto full = generate_dataset(all, kPerturbedLevels, cfg);
  const auto& mary = corpus_template("mary");
  auto alone = generate_instance(mary, Level::L5, 37, cfg);
  auto it = std::find_if(full.problems.begin(), full.problems.end(),
                         [](const auto& p) { return p.instance_key() == "mary/L5/37"; });
  ASSERT_NE(it, full.problems.end());
  EXPECT_EQ(to_json(*it).dump(), to_json(alone).dump());

  cfg.threads = 1;
  auto serial = generate_dataset(all, kPerturbedLevels, cfg);
  ASSERT_EQ(serial.problems.size(), full.problems.size());
  for (std::size_t i = 0; i < serial.problems.size(); ++i)
    ASSERT_EQ(to_json(serial.problems[i]).dump(), to_json(full.problems[i]).dump());
}

TEST(GenerateDataset, SkipAndLogInfeasible) {
  std::vector<ProblemTemplate> ts{subtraction_template("held", "5", "scaled", "3")};
  GenerationConfig cfg{.master_seed = 1, .variants_per_level = 2, .max_attempts = 50};
  std::vector<Level> levels{Level::L1, Level::L6};
  EXPECT_THROW(generate_dataset(ts, levels, cfg), InfeasibleTemplate);
  auto ds = generate_dataset(ts, levels, cfg, InfeasiblePolicy::SkipAndLog);
  ASSERT_EQ(ds.skipped.size(), 1u);
  EXPECT_EQ(ds.skipped[0].level, Level::L6);
  EXPECT_EQ(ds.problems.size(), 1u + 2u);
}

TEST(GeneratorProperties, EveryInstanceSatisfiesConstraints) {
  GenerationConfig cfg{.master_seed = 2024, .variants_per_level = 30};
  const auto& corpus = testing::bundled_corpus();
  auto ds = generate_dataset(corpus.templates, kPerturbedLevels, cfg);
  for (const auto& p : ds.problems) {
    const auto& t = *corpus.find(p.template_id);
    auto report = validate_instance(t, p.level, p.values);
    ASSERT_TRUE(report.ok()) << p.instance_key() << ": " << report.violations.front().detail;
    EXPECT_EQ(p.question_text, render_question(t, p.values));
    EXPECT_EQ(p.ground_truth, report.trace->final);
    for (const auto& v : p.intermediates) EXPECT_GE(v, 0);
    for (const auto& s : t.slots) {
      const Integer& v = p.values[s.index];
      if (p.level == Level::L1 && s.role != SlotRole::Fixed) {
        EXPECT_EQ(digit_count(v), digit_count(s.original_value));
        EXPECT_NE(v, s.original_value);
      }
      if (p.level >= Level::L2 && s.role == SlotRole::Scaled) {
        EXPECT_TRUE(level_range(p.level)->contains(v));
      }
    }
  }
}

TEST(DatasetFiles, ExactFieldsAndByteIdenticalRewrites) {
  GenerationConfig cfg{.master_seed = 3, .variants_per_level = 4};
  const auto& all = testing::bundled_corpus().templates;
  auto ds = generate_dataset(all, kPerturbedLevels, cfg);
  auto dir = testing::scratch_dir("dataset");
  auto files = write_dataset(dir / "a", ds);
  EXPECT_EQ(files.size(), 7u);
  write_dataset(dir / "b", generate_dataset(all, kPerturbedLevels, cfg));
  for (const auto& f : files)
    EXPECT_EQ(read_file(f), read_file(dir / "b" / f.filename())) << f;

  std::ifstream in(level_file(dir / "a", Level::L6));
  std::string line;
  std::getline(in, line);
  auto j = nlohmann::json::parse(line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, (std::set<std::string>{"instance_key", "template_id", "level", "variant_index", "values",
                                         "question", "ground_truth", "intermediates"}));

  auto back = read_dataset(dir / "a");
  ASSERT_EQ(back.size(), ds.problems.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(to_json(back[i]).dump(), to_json(ds.problems[i]).dump());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace gsmr
