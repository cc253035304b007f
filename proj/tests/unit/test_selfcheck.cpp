// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/selfcheck/gradcheck.hpp"
#include "devmoe/selfcheck/propcheck.hpp"
#include "oracles.hpp"

namespace sc = devmoe::selfcheck;
namespace ad = devmoe::ad;

TEST(Gradcheck, EveryCheckPasses) {
  const auto results = sc::run_gradcheck();
  std::set<std::string> names;
  for (const auto& r : results) {
    names.insert(r.name);
    EXPECT_TRUE(r.passed) << r.name << ": " << r.value << " > " << r.tolerance << " " << r.detail;
  }
  for (const char* n : {"primitives", "svd_rows", "composed_loss", "gradient_in_input_span", "projection_identity",
                        "frozen_svd_no_flow"})
    EXPECT_EQ(names.count(n), 1u) << n;
}

TEST(Gradcheck, InjectedFaultIsCaught) {
  sc::GradcheckOptions o;
  o.inject_fault = true;
  const auto results = sc::run_gradcheck(o);
  ASSERT_FALSE(results.empty());
  EXPECT_EQ(results[0].name, "primitives");
  EXPECT_FALSE(results[0].passed);
  EXPECT_GT(results[0].value, 1e-2);
}

TEST(Gradcheck, FiniteDifferenceReportCountsEntries) {
  const sc::FdReport r = sc::finite_difference_check(
      [](ad::Tape&, std::span<const ad::Var> p) { return ad::frob_sq(p[0]); }, {oracle::random_matrix(2, 3, 1)});
  EXPECT_EQ(r.checked, 6u);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(Propcheck, EveryPropertyHolds) {
  const auto results = sc::run_propcheck();
  EXPECT_GE(results.size(), 9u);
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Propcheck, ForAllReportsFirstFailure) {
  const sc::CheckResult r = sc::for_all("always_small", 20, 1, [](sc::Gen& g) -> std::string {
    const std::size_t n = g.size(1, 10);
    return n > 5 ? "n=" + std::to_string(n) : "";
  });
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.detail.find("n="), std::string::npos);
  const sc::CheckResult ok = sc::for_all("trivial", 20, 1, [](sc::Gen&) { return std::string(); });
  EXPECT_TRUE(ok.passed);
}

TEST(Propcheck, GeneratorRanges) {
  sc::Gen g(5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = g.size(3, 7);
    EXPECT_GE(n, 3u);
    EXPECT_LE(n, 7u);
  }
  const auto labels = g.labels(30);
  EXPECT_EQ(labels.size(), 30u);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 0) > 0 && std::count(labels.begin(), labels.end(), 1) > 0, true);
}
