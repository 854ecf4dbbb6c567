#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "tendist/distribution.hpp"

using namespace tendist;

namespace {

TensorDistribution dist(const std::string& text, std::vector<int64_t> dims, Machine m) {
  auto spec = parse_distribution(text);
  return TensorDistribution(TensorVar(spec.tensor, std::move(dims)), std::move(m), spec);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

std::vector<std::vector<int64_t>> all_coords(const std::vector<int64_t>& dims) {
  std::vector<std::vector<int64_t>> out;
  for (int64_t d : dims) {
    if (d == 0) return out;
  }
  std::vector<int64_t> c(dims.size(), 0);
  do {
    out.push_back(c);
  } while (next_coord(c, dims));
  return out;
}

// Random distribution over a random tensor and machine.
TensorDistribution random_distribution(std::mt19937_64& rng, int levels = 1) {
  auto pick = [&](int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng); };
  std::size_t order = static_cast<std::size_t>(pick(0, 4));
  std::vector<int64_t> dims;
  for (std::size_t k = 0; k < order; ++k) dims.push_back(pick(1, 4));
  std::vector<std::vector<int64_t>> mlevels;
  std::vector<DistLevel> dl;
  const std::string letters = "xyzw";
  for (int l = 0; l < levels; ++l) {
    std::size_t mdims = static_cast<std::size_t>(pick(1, 3));
    std::vector<int64_t> md;
    for (std::size_t k = 0; k < mdims; ++k) md.push_back(pick(1, 3));
    DistLevel level;
    for (std::size_t k = 0; k < order; ++k) level.x.emplace_back(1, letters[k]);
    std::vector<std::string> unused = level.x;
    std::shuffle(unused.begin(), unused.end(), rng);
    for (std::size_t k = 0; k < mdims; ++k) {
      int kind = static_cast<int>(pick(0, 2));
      if (kind == 0 && !unused.empty()) {
        level.y.push_back(DimName::named(unused.back()));
        unused.pop_back();
      } else if (kind == 1) {
        level.y.push_back(DimName::fixed(pick(0, md[k] - 1)));
      } else {
        level.y.push_back(DimName::broadcast());
      }
    }
    mlevels.push_back(md);
    dl.push_back(level);
  }
  return TensorDistribution(TensorVar("T", dims), make_machine(mlevels), dl);
}

// Coordinate -> processors straight from the formal definition for one level:
// p holds x iff every partitioned machine dim matches x's block, every fixed
// dim matches its constant, broadcast dims are unconstrained.
std::vector<ProcCoord> oracle_holders(const TensorDistribution& d, const std::vector<int64_t>& x) {
  std::vector<ProcCoord> out;
  const DistLevel& level = d.levels().front();
  for (const ProcCoord& p : d.machine().enumerate()) {
    bool ok = true;
    for (std::size_t g = 0; g < level.y.size(); ++g) {
      const DimName& y = level.y[g];
      if (y.kind == DimName::Kind::Fixed) ok = ok && p[g] == y.value;
      if (y.kind == DimName::Kind::Var) {
        std::size_t t = static_cast<std::size_t>(
            std::find(level.x.begin(), level.x.end(), y.var) - level.x.begin());
        int64_t extent = d.tensor().dims[t], parts = d.machine().dims()[g];
        int64_t block = (extent + parts - 1) / parts;
        ok = ok && x[t] / block == p[g];
      }
    }
    if (ok) out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Validate, Examples) {
  Machine m22 = make_machine({{2, 2}});
  EXPECT_NO_THROW(validate(dist("A: xy -> xy", {4, 4}, m22)));
  EXPECT_EQ(code_of([&] { validate(dist("A: xy -> z", {4, 4}, make_machine({{2}}))); }),
            ErrorCode::UnboundMachineName);
  EXPECT_EQ(code_of([&] { validate(dist("A: xx -> x", {4, 4}, make_machine({{2}}))); }),
            ErrorCode::DuplicateName);
  EXPECT_EQ(code_of([&] { validate(dist("A: xy -> xx", {4, 4}, m22)); }), ErrorCode::DuplicateName);
  EXPECT_EQ(code_of([&] { validate(dist("A: x -> x", {4, 4}, make_machine({{2}}))); }),
            ErrorCode::RankMismatch);
  EXPECT_EQ(code_of([&] { validate(dist("A: xy -> x", {4, 4}, m22)); }), ErrorCode::RankMismatch);
  EXPECT_EQ(code_of([&] { validate(dist("A: xy -> x", {4, 4}, make_machine({{2}, {2}}))); }),
            ErrorCode::RankMismatch);
}

TEST(Parse, RoundTripAndErrors) {
  auto spec = parse_distribution("A: xy -> xy ; zw -> z");
  ASSERT_EQ(spec.levels.size(), 2u);
  EXPECT_EQ(to_string(spec), "A: xy -> xy ; zw -> z");
  EXPECT_EQ(to_string(parse_distribution("B:xz->x0z")), "B: xz -> x0z");
  EXPECT_EQ(to_string(parse_distribution("c: x -> *")), "c: x -> *");
  EXPECT_EQ(parse_distribution("a: -> 0").levels[0].x.size(), 0u);
  EXPECT_EQ(code_of([] { parse_distribution("xy -> xy"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_distribution("A: xy xy"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_distribution("A: x1 -> x"); }), ErrorCode::ParseError);
}

TEST(BlockRange, Examples) {
  EXPECT_EQ(block_range(100, 10, 3), (Interval{30, 40}));
  EXPECT_EQ(block_range(10, 3, 0), (Interval{0, 4}));
  EXPECT_EQ(block_range(10, 3, 1), (Interval{4, 8}));
  EXPECT_EQ(block_range(10, 3, 2), (Interval{8, 10}));
  EXPECT_EQ(block_range(2, 4, 0), (Interval{0, 1}));
  EXPECT_EQ(block_range(2, 4, 1), (Interval{1, 2}));
  EXPECT_EQ(block_range(2, 4, 2), (Interval{2, 2}));
  EXPECT_EQ(block_range(2, 4, 3), (Interval{2, 2}));
}

TEST(BlockRange, BruteForceUnionAndDisjointness) {
  for (int64_t extent = 1; extent <= 8; ++extent) {
    for (int64_t parts = 1; parts <= 8; ++parts) {
      std::vector<int> hits(static_cast<std::size_t>(extent), 0);
      int64_t b = 1;
      while (b * parts < extent) ++b;  // smallest block covering the extent
      for (int64_t i = 0; i < parts; ++i) {
        Interval r = block_range(extent, parts, i);
        EXPECT_LE(r.lo, r.hi);
        for (int64_t v = r.lo; v < r.hi; ++v) {
          ++hits[static_cast<std::size_t>(v)];
          EXPECT_EQ(v / b, i);
        }
      }
      for (int h : hits) EXPECT_EQ(h, 1) << extent << "/" << parts;
    }
  }
}

TEST(ColorOf, Examples) {
  auto d = dist("T: xy -> xy*", {2, 2}, make_machine({{2, 2, 2}}));
  std::vector<int64_t> c01{0, 1};
  EXPECT_EQ(color_of(d, c01), (Color{0, 1}));
  auto rows = dist("T: xy -> x", {4, 4}, make_machine({{2}}));
  std::vector<int64_t> a{3, 0}, b{3, 3};
  EXPECT_EQ(color_of(rows, a), (Color{1}));
  EXPECT_EQ(color_of(rows, b), (Color{1}));
  auto one = dist("T: xy -> x", {4, 4}, make_machine({{1}}));
  for (const auto& x : all_coords({4, 4})) EXPECT_EQ(color_of(one, x), (Color{0}));
  std::vector<int64_t> oob{4, 0};
  EXPECT_EQ(code_of([&] { color_of(rows, oob); }), ErrorCode::OutOfBounds);
}

TEST(ProcessorsOf, Examples) {
  auto d = dist("T: xy -> xy*", {2, 2}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(processors_of(d, {0, 0}), (std::vector<ProcCoord>{{0, 0, 0}, {0, 0, 1}}));
  auto johnson = dist("A: xy -> xy0", {4, 4}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(processors_of(johnson, {1, 1}), (std::vector<ProcCoord>{{1, 1, 0}}));
  auto tiles = dist("A: xy -> xy", {4, 4}, make_machine({{2, 2}}));
  EXPECT_EQ(processors_of(tiles, {0, 1}), (std::vector<ProcCoord>{{0, 1}}));
  auto bad = dist("A: xy -> xy2", {4, 4}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(code_of([&] { processors_of(bad, {0, 0}); }), ErrorCode::FixedOutOfRange);
}

TEST(PieceBounds, Examples) {
  auto rows = dist("T: xy -> x", {4, 4}, make_machine({{2}}));
  EXPECT_EQ(piece_bounds(rows, {1}).to_string(), "[2,4)x[0,4)");
  auto t3 = dist("T: xyz -> xy", {4, 4, 4}, make_machine({{2, 2}}));
  EXPECT_EQ(piece_bounds(t3, {0, 1}).to_string(), "[0,2)x[2,4)x[0,4)");
  int64_t total = 0;
  for (const Color& c : colors(t3)) total += piece_bounds(t3, c).volume();
  EXPECT_EQ(total, 64);
}

TEST(Properties, PartitionTotalityAndPieceBounds) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 400; ++trial) {
    TensorDistribution d = random_distribution(rng, 1 + trial % 2);
    std::map<Color, std::set<std::vector<int64_t>>> classes;
    auto coords = all_coords(d.tensor().dims);
    for (const auto& x : coords) classes[color_of(d, x)].insert(x);
    std::size_t covered = 0;
    for (const Color& c : colors(d)) {
      HyperRect r = piece_bounds(d, c);
      std::set<std::vector<int64_t>> in_rect;
      for (const auto& x : coords) {
        if (r.contains(x)) in_rect.insert(x);
      }
      EXPECT_EQ(in_rect, classes[c]) << d.to_string();
      covered += in_rect.size();
    }
    EXPECT_EQ(covered, coords.size());
  }
}

TEST(Properties, CompositionLaw) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 400; ++trial) {
    TensorDistribution d = random_distribution(rng);
    for (const auto& x : all_coords(d.tensor().dims)) {
      EXPECT_EQ(processors_of(d, color_of(d, x)), oracle_holders(d, x)) << d.to_string();
    }
  }
}

TEST(Properties, BroadcastCardinality) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    TensorDistribution d = random_distribution(rng, 1 + trial % 2);
    int64_t expect = 1;
    for (std::size_t l = 0; l < d.levels().size(); ++l) {
      for (std::size_t k = 0; k < d.levels()[l].y.size(); ++k) {
        if (d.levels()[l].y[k].kind == DimName::Kind::Broadcast) {
          expect *= d.machine().dims()[d.machine().level_offset(l) + k];
        }
      }
    }
    for (const Color& c : colors(d)) {
      EXPECT_EQ(static_cast<int64_t>(processors_of(d, c).size()), expect);
      EXPECT_EQ(home_of(d, c), processors_of(d, c).front());
    }
  }
}

TEST(Properties, HierarchicalConsistency) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    TensorDistribution two = random_distribution(rng, 2);
    Machine outer({two.machine().levels()[0]});
    TensorDistribution one(two.tensor(), outer, std::vector<DistLevel>{two.levels()[0]});
    std::size_t outer_parts = one.parts().size();
    for (const Color& c0 : colors(one)) {
      HyperRect piece = piece_bounds(one, c0);
      int64_t volume = 0;
      for (const Color& c : colors(two)) {
        if (!std::equal(c0.begin(), c0.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(outer_parts))) {
          continue;
        }
        HyperRect inner = piece_bounds(two, c);
        EXPECT_TRUE(piece.contains(inner)) << two.to_string();
        volume += inner.volume();
      }
      EXPECT_EQ(volume, piece.volume()) << two.to_string();
    }
  }
}

TEST(Hierarchical, NodeThenDevicePieces) {
  auto d = dist("A: xy -> xy ; zw -> z", {8, 8}, make_machine({{2, 2}, {2}}));
  EXPECT_EQ(piece_bounds(d, {1, 0, 1}).to_string(), "[6,8)x[0,4)");
  EXPECT_EQ(processors_of(d, {1, 0, 1}), (std::vector<ProcCoord>{{1, 0, 1}}));
}

TEST(ColorOn, UniquePerProcessor) {
  auto d = dist("A: xy -> xy0", {4, 4}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(color_on(d, {1, 0, 0}), (Color{1, 0}));
  EXPECT_FALSE(color_on(d, {1, 0, 1}).has_value());
}

TEST(LowerPlacement, RowsGolden) {
  auto d = dist("T: xy -> x", {4, 4}, make_machine({{2}}));
  EXPECT_EQ(to_string(lower_placement(d)),
            "forall(xo) forall(xi) forall(y) T(x,y) s.t. divide(x,xo,xi,gx), distribute(xo), "
            "communicate(T,xo)");
}

TEST(LowerPlacement, BroadcastAndFixed) {
  auto b = dist("T: xy -> xy*", {2, 2}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(to_string(lower_placement(b)),
            "forall(xo) forall(yo) forall(b2) forall(xi) forall(yi) T(x,y) s.t. divide(x,xo,xi,gx), "
            "divide(y,yo,yi,gy), distribute(xo,yo,b2), communicate(T,b2)");
  auto f = dist("B: xz -> x0z", {4, 4}, make_machine({{2, 2, 2}}));
  EXPECT_EQ(to_string(lower_placement(f)),
            "forall(xo) forall(f1) forall(zo) forall(xi) forall(zi) B(x,z) s.t. divide(x,xo,xi,gx), "
            "divide(z,zo,zi,gz), distribute(xo,f1,zo), communicate(B,zo), fix(f1,0)");
  auto s = dist("a: -> 0", {}, make_machine({{4}}));
  EXPECT_EQ(to_string(lower_placement(s)), "forall(f0) a() s.t. distribute(f0), communicate(a,f0), fix(f0,0)");
}

TEST(LowerPlacement, WellFormed) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    TensorDistribution d = random_distribution(rng, 1 + trial % 2);
    EXPECT_NO_THROW(check_well_formed(lower_placement(d))) << d.to_string();
  }
}
