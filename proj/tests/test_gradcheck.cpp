#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>

#include "dcnn/gradcheck.hpp"

using namespace dcnn;

TEST_CASE("gradcheck passes at the default seed") {
  const GradCheckReport report = run_gradcheck(0);
  REQUIRE(report.entries.size() == 6);

  // every checked surface appears exactly once
  std::set<std::string> names;
  for (const auto& e : report.entries) names.insert(e.name);
  CHECK(names == std::set<std::string>{"conv", "maxpool", "relu", "dense",
                                       "softmax_xent", "network"});

  for (const auto& e : report.entries) {
    INFO(e.name, " rel error ", e.max_rel_error);
    CHECK(e.max_rel_error < report.tolerance);
  }
  CHECK(report.passed());
}

TEST_CASE("gradcheck passes at a few more seeds") {
  for (std::uint64_t seed : {1ull, 7ull, 42ull})
    CHECK(run_gradcheck(seed).passed());
}

TEST_CASE("an injected gradient error is detected") {
  const GradCheckReport report = run_gradcheck(0, /*inject_error=*/true);
  CHECK_FALSE(report.passed());
}
