#include "gsmr/pipeline.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace gsmr {
namespace {

using testing::corpus_dir;
using testing::scratch_dir;

ModelEndpoint mock(std::string url, std::string name = "m") { return {std::move(url), std::move(name), "UNUSED_KEY_ENV"}; }

GenerateOptions small_generate(const std::filesystem::path& run) {
  GenerateOptions o;
  o.corpus_dir = corpus_dir();
  o.run_dir = run;
  o.config.master_seed = 7;
  o.config.variants_per_level = 2;
  return o;
}

RunOptions mock_run(const std::filesystem::path& run) {
  RunOptions o;
  o.run_dir = run;
  o.target = mock("mock://target");
  o.judge = mock("mock://judge");
  o.concurrency = 4;
  return o;
}

int exit_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CommandError& e) {
    return e.code;
  }
  return kExitOk;
}

TEST(Pipeline, GenerateIsIdempotentAndRefusesOtherInputs) {
  auto run = scratch_dir("pipe_gen");
  auto first = cmd_generate(small_generate(run));
  EXPECT_FALSE(first.up_to_date);
  EXPECT_EQ(first.problems, 12u * (1 + 6 * 2));
  auto manifest_before = read_file(run / "manifest.json");
  auto again = cmd_generate(small_generate(run));
  EXPECT_TRUE(again.up_to_date);
  EXPECT_EQ(read_file(run / "manifest.json"), manifest_before);

  auto other = small_generate(run);
  other.config.master_seed = 8;
  EXPECT_EQ(exit_code_of([&] { cmd_generate(other); }), kExitData);
  other.force = true;
  EXPECT_FALSE(cmd_generate(other).up_to_date);
}

TEST(Pipeline, SameInputsGiveIdenticalDatasetFiles) {
  auto a = scratch_dir("pipe_same_a"), b = scratch_dir("pipe_same_b");
  auto ra = cmd_generate(small_generate(a));
  auto rb = cmd_generate(small_generate(b));
  ASSERT_EQ(ra.files.size(), rb.files.size());
  for (std::size_t i = 0; i < ra.files.size(); ++i) EXPECT_EQ(read_file(ra.files[i]), read_file(rb.files[i]));
}

TEST(Pipeline, BadTemplateFailsNamingTheFile) {
  auto dir = scratch_dir("pipe_badcorpus");
  std::filesystem::copy_file(corpus_dir() / "judy.tmpl", dir / "judy.tmpl");
  {
    std::ofstream out(dir / "halves.tmpl");
    out << "id: halves\nquestion: Split {0} apples between {1} kids.\n"
           "slot s0 = 10 scaled\nslot s1 = 2 held\nstep each := s0 / s1\nanswer: each\n";
  }
  auto o = small_generate(scratch_dir("pipe_badcorpus_run"));
  o.corpus_dir = dir;
  try {
    cmd_generate(o);
    FAIL() << "expected a data error";
  } catch (const CommandError& e) {
    EXPECT_EQ(e.code, kExitData);
    EXPECT_NE(std::string(e.what()).find("halves.tmpl"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, UnknownTemplateIdIsDataError) {
  auto o = small_generate(scratch_dir("pipe_unknown"));
  o.template_ids = {"nobody"};
  EXPECT_EQ(exit_code_of([&] { cmd_generate(o); }), kExitData);
}

TEST(Pipeline, LockExcludesConcurrentWriters) {
  auto run = scratch_dir("pipe_lock");
  RunLock held(run);
  EXPECT_EQ(exit_code_of([&] { cmd_generate(small_generate(run)); }), kExitData);
}

TEST(Pipeline, MockRunReportsRatesSummingToHundred) {
  auto run = scratch_dir("pipe_run");
  cmd_generate(small_generate(run));
  auto r = cmd_run(mock_run(run));
  EXPECT_EQ(r.graded_total, 156u);
  EXPECT_EQ(r.ungradable_total, 0u);
  auto rep = cmd_report({run});
  ASSERT_EQ(rep.rates.cells.size(), 7u);
  for (const auto& c : rep.rates.cells) {
    double sum = 0;
    for (Verdict v : kAllVerdicts) sum += c[v].rate;
    EXPECT_NEAR(sum, 100.0, 1e-9) << to_string(c.level);
    EXPECT_EQ(c.passes, c.expected_passes);
  }
  // Baseline questions are the originals, which the mock answers correctly.
  EXPECT_DOUBLE_EQ((*rep.rates.find("mock-target", Level::Original))[Verdict::Correct].rate, 100.0);

  // Every artifact is named by some manifest event.
  std::set<std::string> listed;
  Manifest manifest(run);
  for (const auto& ev : manifest.events()) {
    if (!ev.contains("files")) continue;
    if (ev["files"].is_object())
      for (const auto& [name, h] : ev["files"].items()) listed.insert("dataset/" + name);
    else
      for (const auto& f : ev["files"]) listed.insert(f.get<std::string>());
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run)) {
    if (!entry.is_regular_file()) continue;
    auto rel = std::filesystem::relative(entry.path(), run).string();
    if (rel == "manifest.json" || rel == ".lock") continue;
    EXPECT_TRUE(listed.count(rel)) << rel;
  }
}

TEST(Pipeline, UnreachableTargetExitsThreeAndResumes) {
  auto run = scratch_dir("pipe_down");
  cmd_generate(small_generate(run));
  auto o = mock_run(run);
  o.target = mock("mock://down", "mock-target");
  EXPECT_EQ(exit_code_of([&] { cmd_run(o); }), kExitEndpoint);
  EXPECT_EQ(exit_code_of([&] { cmd_report({run}); }), kExitData);
  auto r = cmd_run(mock_run(run));
  EXPECT_EQ(r.inference.fetched, 156u);
  EXPECT_EQ(exit_code_of([&] { cmd_report({run}); }), kExitOk);
}

TEST(Pipeline, UnreachableJudgeExitsThree) {
  auto run = scratch_dir("pipe_judge_down");
  cmd_generate(small_generate(run));
  auto o = mock_run(run);
  o.judge = mock("mock://down", "judge");
  EXPECT_EQ(exit_code_of([&] { cmd_run(o); }), kExitEndpoint);
  auto r = cmd_run(mock_run(run));
  EXPECT_EQ(r.inference.already_done, 156u);
  EXPECT_EQ(r.graded_total, 156u);
}

TEST(Pipeline, UngradableAboveThresholdExitsFour) {
  auto run = scratch_dir("pipe_ungradable");
  cmd_generate(small_generate(run));
  auto o = mock_run(run);
  o.judge = mock("mock://judge?malformed=100");
  o.max_ungradable_fraction = 0.01;
  EXPECT_EQ(exit_code_of([&] { cmd_run(o); }), kExitThreshold);
  // The report still accounts for every pass; ungradable is its own class.
  auto rep = cmd_report({run});
  double ungradable = 0;
  for (const auto& c : rep.rates.cells) ungradable += c[Verdict::Ungradable].rate;
  EXPECT_GT(ungradable, 0.0);
}

TEST(Pipeline, PartialReportNeedsFlag) {
  auto run = scratch_dir("pipe_partial");
  cmd_generate(small_generate(run));
  auto o = mock_run(run);
  o.judge = mock("mock://down", "judge");
  EXPECT_EQ(exit_code_of([&] { cmd_run(o); }), kExitEndpoint);
  EXPECT_EQ(exit_code_of([&] { cmd_report({run}); }), kExitData);
  ReportOptions ro{run};
  ro.allow_partial = true;
  auto rep = cmd_report(ro);
  EXPECT_NE(rep.summary.find("PARTIAL"), std::string::npos);
}

TEST(Pipeline, ReportOnEmptyDirectoryIsError) {
  EXPECT_EQ(exit_code_of([&] { cmd_report({scratch_dir("pipe_empty")}); }), kExitData);
}

TEST(Pipeline, ChangedSamplingInSameRunIsRefused) {
  auto run = scratch_dir("pipe_sampling");
  cmd_generate(small_generate(run));
  cmd_run(mock_run(run));
  auto o = mock_run(run);
  o.sampling.temperature = 0.5;
  EXPECT_EQ(exit_code_of([&] { cmd_run(o); }), kExitData);
}

TEST(Pipeline, RecallIsMonotoneInN) {
  auto run = scratch_dir("pipe_recall");
  auto g = small_generate(run);
  g.levels = {Level::L1, Level::L6};
  cmd_generate(g);
  auto o = mock_run(run);
  o.sampling = SamplingParams::recall(4);
  cmd_run(o);
  ReportOptions ro{run};
  ro.recall_n = {1, 2, 4};
  auto rep = cmd_report(ro);
  // Baseline is always generated alongside the requested levels.
  ASSERT_EQ(rep.recall.size(), 9u);
  for (std::size_t i = 0; i + 1 < rep.recall.size(); ++i)
    if (rep.recall[i].level == rep.recall[i + 1].level) EXPECT_LE(rep.recall[i].recall, rep.recall[i + 1].recall);
}

TEST(Pipeline, RetestWritesTable) {
  auto run = scratch_dir("pipe_retest");
  cmd_generate(small_generate(run));
  cmd_run(mock_run(run));
  auto r = cmd_retest_arith({run, mock("mock://target"), mock("mock://judge")});
  EXPECT_GT(r.mined.instances.size(), 0u);
  std::size_t total = 0;
  for (const auto& c : r.cells) total += c.total;
  EXPECT_EQ(total, r.mined.instances.size());
  cmd_report({run});
  auto csv = read_file(run / "report" / "arith_retest.csv");
  EXPECT_NE(csv.find("mock-target,L6"), std::string::npos);
}

TEST(Pipeline, MockUrlParsing) {
  auto s = parse_endpoint(mock("mock://target?latency_ms=20&seed=3"));
  EXPECT_EQ(s.mock_kind, "target");
  EXPECT_EQ(s.mock_params.at("latency_ms"), "20");
  EXPECT_EQ(mock_param(s, "seed", 0), 3);
  EXPECT_EQ(exit_code_of([] { parse_endpoint(mock("mock://nothing")); }), kExitUsage);
  EXPECT_TRUE(parse_endpoint(mock("https://example.invalid/v1")).mock_kind.empty());
}

}  // namespace
}  // namespace gsmr
