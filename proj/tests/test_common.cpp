#include <gtest/gtest.h>

#include <set>

#include "cimsim/common.hpp"

using namespace cimsim;

TEST(Common, CeilDivAndLog2) {
  EXPECT_EQ(ceil_div(10, 3), 4u);
  EXPECT_EQ(ceil_div(9, 3), 3u);
  EXPECT_EQ(ceil_log2(1), 0u);
  EXPECT_EQ(ceil_log2(2), 1u);
  EXPECT_EQ(ceil_log2(5), 3u);
  EXPECT_EQ(ceil_log2(64), 6u);
}

TEST(Common, FloorCountAbsorbsBinaryRounding) {
  // (1 - 0.7) * 10 is 2.9999999999999996 in doubles
  EXPECT_EQ(floor_count((1.0 - 0.7) * 10.0), 3u);
  EXPECT_EQ(floor_count(0.4), 0u);
  EXPECT_EQ(floor_count(-1.0), 0u);
}

TEST(Common, RngIsSeedStable) {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.below(1000));
    vb.push_back(b.below(1000));
    vc.push_back(c.below(1000));
  }
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  for (auto v : va) EXPECT_LT(v, 1000u);
}

TEST(Common, RngUnitRange) {
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Common, ShuffleIsPermutation) {
  Rng r(1);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 10u);
}

TEST(Common, DeriveSeedSpreads) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(5, s));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Common, ValidationReportCountsErrorsOnly) {
  ValidationReport r;
  EXPECT_TRUE(r.ok());
  r.warn("m", "f", "just a warning");
  EXPECT_TRUE(r.ok());
  r.error("m", "f", "broken");
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.error_count(), 1u);
  EXPECT_NE(r.str().find("broken"), std::string::npos);
  ValidationReport other;
  other.error("x", "y", "z");
  r.merge(other);
  EXPECT_EQ(r.error_count(), 2u);
}

TEST(Common, MatrixPayloadMismatchThrows) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), SemanticError);
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.dims(), (Dims2{2, 3}));
}

TEST(Common, JsonHelpers) {
  const json j = detail::parse_json(R"({"a": 3, "b": "x"})", "doc");
  EXPECT_EQ(detail::get_required<int>(j, "a", "doc"), 3);
  EXPECT_EQ(detail::get_or<int>(j, "c", 9, "doc"), 9);
  EXPECT_THROW(detail::get_required<int>(j, "c", "doc"), SchemaError);
  EXPECT_THROW(detail::get_required<int>(j, "b", "doc"), SchemaError);
  EXPECT_THROW(detail::parse_json("{nope", "doc"), SchemaError);
}
