#include "gsmr/guest.hpp"

#include <gtest/gtest.h>

#include <chrono>

namespace gsmr {
namespace {

GuestExecutor shell(const std::string& script) { return GuestExecutor({"/bin/sh", "-c", script}); }

TEST(GuestOutput, SingleResultLine) {
  EXPECT_EQ(parse_guest_output("RESULT 3594048\n"), Rational(3594048));
  EXPECT_EQ(parse_guest_output("RESULT -2.5"), Rational(-5, 2));
  EXPECT_FALSE(parse_guest_output(""));
  EXPECT_FALSE(parse_guest_output("RESULT abc\n"));
  EXPECT_FALSE(parse_guest_output("hello\nRESULT 1\n"));
  EXPECT_FALSE(parse_guest_output("RESULT 1\nRESULT 2\n"));
}

TEST(GuestExecutor, CodeArrivesOnStdin) {
  // The fake guest echoes back the length of what it read.
  auto g = shell("n=$(wc -c); echo \"RESULT $n\"");
  GuestRequest req{"def solver():\n    return 1\n"};
  auto r = g.execute(req);
  ASSERT_EQ(r.status, GuestResult::Status::Ok) << r.stderr_excerpt;
  EXPECT_EQ(*r.value, Rational(static_cast<long>(req.solver_code.size())));
}

TEST(GuestExecutor, NonzeroExitIsCrash) {
  auto r = shell("cat >/dev/null; echo 'RESULT 1'; echo boom >&2; exit 3").execute({"x"});
  EXPECT_EQ(r.status, GuestResult::Status::Crash);
  EXPECT_FALSE(r.value);
  EXPECT_NE(r.stderr_excerpt.find("boom"), std::string::npos);
}

TEST(GuestExecutor, NonNumericOutput) {
  auto r = shell("cat >/dev/null; echo 'RESULT seven'").execute({"x"});
  EXPECT_EQ(r.status, GuestResult::Status::NonNumeric);
  EXPECT_FALSE(r.value);
}

TEST(GuestExecutor, TimeoutKillsProcessGroup) {
  GuestRequest req{"x"};
  req.timeout = std::chrono::milliseconds(300);
  auto start = std::chrono::steady_clock::now();
  auto r = shell("cat >/dev/null; sleep 30 & wait").execute(req);
  auto took = std::chrono::steady_clock::now() - start;
  EXPECT_EQ(r.status, GuestResult::Status::Timeout);
  EXPECT_LT(took, 2 * req.timeout + std::chrono::milliseconds(200));
}

TEST(GuestExecutor, MissingProgramIsCrash) {
  auto r = GuestExecutor({"/nonexistent/guest"}).execute({"x"});
  EXPECT_EQ(r.status, GuestResult::Status::Crash);
}

}  // namespace
}  // namespace gsmr
