#include "gsmr/text_numbers.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace gsmr {
namespace {

using testing::ints;

TEST(ExtractFinalAnswer, LastNumeralWithMarker) {
  EXPECT_EQ(*extract_final_answer("...so she makes $7,425 in 1 week. The answer is 7425."), Rational(7425));
}

TEST(ExtractFinalAnswer, Boxed) {
  EXPECT_EQ(*extract_final_answer("...the boots cost \\boxed{14705599} dollars"), Rational(14705599));
  EXPECT_EQ(*extract_final_answer("x = 3 \\boxed{\\$7{,}425} then 12"), Rational(7425));
}

TEST(ExtractFinalAnswer, NoNumbers) { EXPECT_FALSE(extract_final_answer("no numbers here")); }

TEST(ExtractFinalAnswer, MarkerOverridesTrailingNumerals) {
  EXPECT_EQ(*extract_final_answer("The answer is $7,425 for 1 week."), Rational(7425));
  EXPECT_EQ(*extract_final_answer("Step 1: 2 + 2 = 4\n#### 4"), Rational(4));
  EXPECT_EQ(*extract_final_answer("Final answer:\n\n**31868847** outfits"), Rational(31868847));
}

TEST(ExtractFinalAnswer, PlainLastNumeral) {
  EXPECT_EQ(*extract_final_answer("16541186 + 12947038 = 29488224"), Rational(29488224));
  EXPECT_EQ(*extract_final_answer("It costs $2.50 each"), Rational(5, 2));
  EXPECT_EQ(*extract_final_answer("the total is -12"), Rational(-12));
  EXPECT_EQ(*extract_final_answer("10-3"), Rational(3));
}

TEST(ExtractNumberList, JudyLevelSix) {
  EXPECT_EQ(extract_number_list("Judy teaches 3124213 dance classes every day on the weekdays and 7832129 classes on "
                                "Saturday. If each class has 25 students and she charges $35 per student, how much "
                                "money does she make in 1 week?"),
            ints({3124213, 7832129, 25, 35, 1}));
  EXPECT_EQ(extract_number_list("Judy teaches 3,124,213 dance classes and 7,832,129 classes"), ints({3124213, 7832129}));
}

TEST(ExtractNumberList, AppendixMary) {
  EXPECT_EQ(extract_number_list("Mary is 1922674 years younger than Joan, who is 2112084 years older than Jessa. If "
                                "Jessa is 1840103 years old, what is the sum of the ages of the three girls?"),
            ints({1922674, 2112084, 1840103}));
}

TEST(ExtractNumberList, EmptyAndDuplicatesAndDecimals) {
  EXPECT_TRUE(extract_number_list("no numerals at all").empty());
  EXPECT_EQ(extract_number_list("15 students pay $15 each, 2.5 hours"), ints({15, 15}));
  EXPECT_EQ(extract_number_list("lists like 1,2,3 stay apart"), ints({1, 2, 3}));
}

TEST(ScanNumerals, Positions) {
  auto n = scan_numerals("a 1,000 b");
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].begin, 2u);
  EXPECT_EQ(n[0].end, 7u);
  EXPECT_EQ(n[0].value, Rational(1000));
}

TEST(FormatNumberList, PythonListShape) {
  EXPECT_EQ(format_number_list(ints({3124213, 25})), "[3124213, 25]");
  EXPECT_EQ(format_number_list({}), "[]");
}

}  // namespace
}  // namespace gsmr
