#include <gtest/gtest.h>

#include "suites/tensor_suite.hpp"

TEST(OracleSweep, Conv2dOnRandomShapes) {
  auto r = suite::sweep_conv2d(120, 101);
  EXPECT_EQ(r.cases, 120);
  EXPECT_LT(r.max_abs_error, 1e-5);
}

TEST(OracleSweep, MaxPoolOnRandomShapes) {
  auto r = suite::sweep_max_pool(120, 102);
  EXPECT_EQ(r.cases, 120);
  EXPECT_EQ(r.max_abs_error, 0.0);
}

TEST(OracleSweep, GlobalAvgPoolOnRandomShapes) {
  auto r = suite::sweep_global_avg(120, 103);
  EXPECT_EQ(r.cases, 120);
  EXPECT_LT(r.max_abs_error, 1e-6);
}

TEST(OracleSweep, LinearOnRandomShapes) {
  auto r = suite::sweep_linear(120, 104);
  EXPECT_EQ(r.cases, 120);
  EXPECT_LT(r.max_abs_error, 1e-5);
}

TEST(GradientSuite, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : suite::gradient_suite(1e-5, 7))
    EXPECT_TRUE(c.report.passed) << c.name << ": " << c.report.worst << " rel " << c.report.max_rel_error;
}
