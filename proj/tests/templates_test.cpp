#include "gsmr/templates.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include "test_support.hpp"

namespace gsmr {
namespace {

using testing::corpus_template;
using testing::ints;

TEST(ParseTemplate, JudyHasFiveSlotsAndFourSteps) {
  const auto& t = corpus_template("judy");
  ASSERT_EQ(t.slots.size(), 5u);
  EXPECT_EQ(t.slots[0].role, SlotRole::Scaled);
  EXPECT_EQ(t.slots[2].role, SlotRole::Held);
  EXPECT_EQ(t.slots[4].role, SlotRole::Fixed);
  EXPECT_EQ(t.slots[3].original_value, 15);
  ASSERT_EQ(t.answer_program.steps.size(), 4u);
  EXPECT_EQ(t.answer_program.result_ref, "total");
}

TEST(ParseTemplate, RejectsDivision) {
  const char* src =
      "id: half\nquestion: Split {0} apples among {1} kids.\n"
      "slot s0 = 10 scaled\nslot s1 = 2 held\nstep each := s0 / s1\nanswer: each\n";
  try {
    parse_template(src, "half.tmpl");
    FAIL() << "expected TemplateError";
  } catch (const TemplateError& e) {
    EXPECT_EQ(e.line, 5u);
    EXPECT_EQ(e.column, 17u);  // the slash
    EXPECT_NE(e.message.find("division not allowed"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("half.tmpl:5:17"), std::string::npos);
  }
}

TEST(ParseTemplate, RejectsNonIntegerConstant) {
  const char* src = "id: t\nquestion: {0} items.\nslot s0 = 3 scaled\nstep x := s0 * 2.5\nanswer: x\n";
  EXPECT_THROW(
      {
        try {
          parse_template(src);
        } catch (const TemplateError& e) {
          EXPECT_NE(e.message.find("non-integer constant"), std::string::npos);
          throw;
        }
      },
      TemplateError);
}

TEST(ParseTemplate, DanglingSlotReferenceInQuestion) {
  const char* src =
      "id: t\nquestion: {0} {1} {2} {3} {4} and {7}\n"
      "slot s0 = 1 scaled\nslot s1 = 1 scaled\nslot s2 = 1 scaled\nslot s3 = 1 scaled\nslot s4 = 1 scaled\n"
      "step x := s0 + s1 + s2 + s3 + s4\nanswer: x\n";
  try {
    parse_template(src);
    FAIL();
  } catch (const TemplateError& e) {
    EXPECT_EQ(e.line, 2u);
    EXPECT_NE(e.message.find("dangling slot reference {7}"), std::string::npos);
  }
}

TEST(ParseTemplate, DanglingSlotReferenceInProgram) {
  const char* src = "id: t\nquestion: {0}\nslot s0 = 1 scaled\nstep x := s0 + s7\nanswer: x\n";
  try {
    parse_template(src);
    FAIL();
  } catch (const TemplateError& e) {
    EXPECT_EQ(e.line, 4u);
    EXPECT_NE(e.message.find("dangling slot reference s7"), std::string::npos);
  }
}

TEST(ParseTemplate, OtherStructuralErrors) {
  auto msg = [](const std::string& src) {
    try {
      parse_template(src);
    } catch (const TemplateError& e) {
      return e.message;
    }
    return std::string("<no error>");
  };
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 scaled\nslot s1 = 2 scaled\nstep x := s0 + s1\nanswer: x\n")
                .find("never appears"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 scaled\nstep x := s0 + y\nanswer: x\n").find("undefined step"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 scaled\nstep x := s0\nanswer: y\n").find("unknown step"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 bogus\nstep x := s0\nanswer: x\n").find("unknown slot role"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 scaled\nstep x := 0 - s0\nanswer: x\n").find("negative"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s0 = 1 scaled\nstep x := s0 ** 2\nanswer: x\n").find("'**'"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0\nslot s0 = 1 scaled\nstep x := s0\nanswer: x\n").find("unterminated"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nquestion: {0}\nslot s1 = 1 scaled\nstep x := s1\nanswer: x\n").find("contiguous"),
            std::string::npos);
  EXPECT_NE(msg("id: t\nwhat is this\n").find("unrecognized directive"), std::string::npos);
}

TEST(ParseTemplate, BracesEscapeAndCommentsAreIgnored) {
  const char* src =
      "# header comment\n\nid: braces\nquestion: Set {{a}} has {0} items.\n  # indented comment\n"
      "slot s0 = 3 scaled\nstep x := (s0 + 1) * 2\nanswer: x\n";
  auto t = parse_template(src);
  EXPECT_EQ(render_question(t, ints({12})), "Set {a} has 12 items.");
  EXPECT_EQ(evaluate_program(t.answer_program, ints({12})).final, 26);
}

TEST(RoundTrip, EveryBundledTemplate) {
  for (const auto& t : testing::bundled_corpus().templates) {
    auto text = serialize_template(t);
    auto back = parse_template(text);
    EXPECT_TRUE(structurally_equal(t, back)) << t.id;
    EXPECT_EQ(serialize_template(back), text) << t.id;
  }
}

TEST(RenderQuestion, JudyOriginalText) {
  const auto& t = corpus_template("judy");
  EXPECT_EQ(render_question(t, t.original_values()),
            "Judy teaches 5 dance classes every day on the weekdays and 8 classes on Saturday. If each class has "
            "15 students and she charges $15 per student, how much money does she make in 1 week?");
}

TEST(RenderQuestion, JudyLevelSixText) {
  const auto& t = corpus_template("judy");
  auto v = ints({3124213, 7832129, 25, 35, 1});
  EXPECT_EQ(render_question(t, v),
            "Judy teaches 3124213 dance classes every day on the weekdays and 7832129 classes on Saturday. If each "
            "class has 25 students and she charges $35 per student, how much money does she make in 1 week?");
  EXPECT_EQ(render_question(t, v, {.thousands_separator = true}),
            "Judy teaches 3,124,213 dance classes every day on the weekdays and 7,832,129 classes on Saturday. If "
            "each class has 25 students and she charges $35 per student, how much money does she make in 1 week?");
}

TEST(RenderQuestion, ZeroSlotsAndMissingValue) {
  auto t = parse_template("id: plain\nquestion: What is two plus two?\nstep x := 2 + 2\nanswer: x\n");
  EXPECT_EQ(render_question(t, {}), "What is two plus two?");
  EXPECT_THROW(render_question(corpus_template("judy"), ints({1, 2})), MissingSlotValue);
}

TEST(GroupThousands, Digits) {
  EXPECT_EQ(group_thousands("1"), "1");
  EXPECT_EQ(group_thousands("999"), "999");
  EXPECT_EQ(group_thousands("1000"), "1,000");
  EXPECT_EQ(group_thousands("20521544750"), "20,521,544,750");
}

TEST(EvaluateProgram, JudyOriginal) {
  // (5*5 + 8) * 15 * 15 * 1
  const auto& t = corpus_template("judy");
  auto trace = evaluate_program(t.answer_program, t.original_values());
  EXPECT_EQ(trace.final, 7425);
  ASSERT_EQ(trace.intermediates.size(), 4u);
  EXPECT_EQ(trace.intermediates[0], (std::pair<std::string, Integer>{"classes", 33}));
  EXPECT_EQ(trace.intermediates[3].first, "total");
}

TEST(EvaluateProgram, JudyTableOneLevelSix) {
  auto trace = evaluate_program(corpus_template("judy").answer_program, ints({3124213, 7832129, 25, 35, 1}));
  EXPECT_EQ(trace.final, Integer("20521544750"));
}

TEST(EvaluateProgram, AppendixGroundTruths) {
  EXPECT_EQ(evaluate_program(corpus_template("laurel").answer_program, ints({8852986, 5309889})).final, 31868847);
  EXPECT_EQ(evaluate_program(corpus_template("finn").answer_program, ints({9360266, 7180820, 12947038})).final,
            3594048);
  EXPECT_EQ(evaluate_program(corpus_template("gloria").answer_program, ints({4528570, 3392343})).final, 14705599);
  EXPECT_EQ(evaluate_program(corpus_template("mary").answer_program, ints({1922674, 2112084, 1840103})).final,
            7821803);
}

TEST(EvaluateProgram, NegativeIntermediatesAreReportedNotRejected) {
  auto trace = evaluate_program(corpus_template("finn").answer_program, ints({1, 1, 5}));
  EXPECT_EQ(trace.final, -3);
}

TEST(EvaluateProgram, NoOverflowOnWideValues) {
  auto t = parse_template(
      "id: wide\nquestion: {0} {1} {2}\nslot s0 = 1 scaled\nslot s1 = 1 scaled\nslot s2 = 1 scaled\n"
      "step x := s0 * s1 * s2 * s0 * s1 * s2\nanswer: x\n");
  auto v = ints({9999999, 9999999, 9999999});
  EXPECT_EQ(evaluate_program(t.answer_program, v).final, Integer("999999400000149999980000001499999940000001"))
      << "9999999^6";
}

TEST(Determinism, RenderAndEvaluate) {
  const auto& t = corpus_template("library");
  auto v = ints({812, 377, 409, 7, 550});
  EXPECT_EQ(render_question(t, v), render_question(t, v));
  auto a = evaluate_program(t.answer_program, v);
  auto b = evaluate_program(t.answer_program, v);
  EXPECT_EQ(a.final, b.final);
  EXPECT_EQ(a.intermediates, b.intermediates);
}

TEST(Corpus, HashIsStableAndContentSensitive) {
  auto c1 = load_corpus(testing::corpus_dir());
  auto c2 = load_corpus(testing::corpus_dir());
  EXPECT_EQ(c1.hash, c2.hash);
  EXPECT_EQ(c1.hash.size(), 64u);
  auto templates = c1.templates;
  templates[0].slots[0].original_value += 1;
  EXPECT_NE(corpus_hash(templates), c1.hash);
  EXPECT_GE(c1.templates.size(), 5u);
  EXPECT_TRUE(std::is_sorted(c1.templates.begin(), c1.templates.end(),
                             [](const auto& a, const auto& b) { return a.id < b.id; }));
}

}  // namespace
}  // namespace gsmr
