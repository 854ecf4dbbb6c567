#include <gtest/gtest.h>

#include <set>

#include "tendist/machine.hpp"

using namespace tendist;

TEST(Machine, FlatGrid) {
  Machine m = make_machine({{3, 3}});
  EXPECT_EQ(m.size(), 9);
  auto all = m.enumerate();
  EXPECT_EQ(all.front(), (ProcCoord{0, 0}));
  EXPECT_EQ(all.back(), (ProcCoord{2, 2}));
}

TEST(Machine, HierarchicalNodesAndDevices) {
  Machine m = make_machine({{2, 2}, {4}});
  EXPECT_EQ(m.size(), 16);
  EXPECT_EQ(m.num_levels(), 2u);
  EXPECT_EQ(m.level_of_dim(2), 1u);
  EXPECT_EQ(m.first_differing_level({0, 1, 2}, {0, 1, 3}), 1);
  EXPECT_EQ(m.first_differing_level({1, 1, 2}, {0, 1, 2}), 0);
  EXPECT_EQ(m.first_differing_level({1, 1, 2}, {1, 1, 2}), -1);
}

TEST(Machine, JohnsonCube) { EXPECT_EQ(make_machine({{2, 2, 2}}).size(), 8); }

TEST(Machine, EmptyGrid) {
  for (auto levels : std::vector<std::vector<std::vector<int64_t>>>{{}, {{}}, {{2, 0}}}) {
    try {
      make_machine(levels);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyGrid);
    }
  }
}

TEST(Machine, EnumerateOrder) {
  EXPECT_EQ(make_machine({{2}}).enumerate(), (std::vector<ProcCoord>{{0}, {1}}));
  EXPECT_EQ(make_machine({{2, 2}}).enumerate(),
            (std::vector<ProcCoord>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  EXPECT_EQ(make_machine({{1, 1, 1}}).enumerate(), (std::vector<ProcCoord>{{0, 0, 0}}));
}

TEST(Machine, EnumerateDistinctAndCountForAllSmallGrids) {
  for (int64_t a = 1; a <= 3; ++a)
    for (int64_t b = 1; b <= 3; ++b)
      for (int64_t c = 1; c <= 3; ++c) {
        Machine m = make_machine({{a, b}, {c}});
        auto all = m.enumerate();
        std::set<ProcCoord> distinct(all.begin(), all.end());
        EXPECT_EQ(static_cast<int64_t>(distinct.size()), a * b * c);
        EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
        EXPECT_EQ(m.flattened().size(), m.size());
        EXPECT_EQ(m.flattened().enumerate(), all);
        for (int64_t k = 0; k < m.size(); ++k) EXPECT_EQ(m.index_of(all[k]), k);
      }
}

TEST(Machine, Parse) {
  EXPECT_EQ(Machine::parse("3x3"), make_machine({{3, 3}}));
  EXPECT_EQ(Machine::parse("2x2/4"), make_machine({{2, 2}, {4}}));
  EXPECT_EQ(Machine::parse("4").to_string(), "4");
  EXPECT_EQ(Machine::parse("2x2/4").to_string(), "2x2/4");
  for (const char* bad : {"", "3x", "x3", "3y3", "2//2"}) {
    EXPECT_THROW(Machine::parse(bad), Error) << bad;
  }
}
