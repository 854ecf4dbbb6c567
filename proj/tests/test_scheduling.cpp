#include <gtest/gtest.h>

#include <random>

#include "support/fuzz.hpp"
#include "tendist/kernels.hpp"
#include "tendist/scheduling.hpp"

using namespace tendist;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::IoError;
}

CinStmt gemm(int64_t n) { return lower_to_cin(make_kernel("gemm", uniform_extents("gemm", n))); }

TensorIndexStmt gemm_stmt(int64_t n) { return make_kernel("gemm", uniform_extents("gemm", n)); }

bool same_result(const TensorIndexStmt& stmt, const CinStmt& transformed, uint64_t seed = 1) {
  TensorMap a = random_inputs(stmt, seed), b = a;
  interpret(lower_to_cin(stmt), a);
  interpret(transformed, b);
  const std::string& out = stmt.lhs.tensor.name;
  return bit_equal(a.at(out), b.at(out));
}

int64_t extent_of(const CinStmt& s, const std::string& v) {
  Nest nest = flatten_nests(s).front();
  for (const IndexVar& l : nest.loops) {
    if (l.name == v) return l.extent;
  }
  return -1;
}

int64_t valid_points(const CinStmt& s) {
  NestExecutor ex(flatten_nests(s).front());
  std::vector<int64_t> values(ex.resolver().num_slots(), 0);
  int64_t n = 0;
  ex.run(
      values, 0, [](std::size_t, std::span<const int64_t>) { return 0.0; },
      [&](std::span<const int64_t>, double, bool) { ++n; });
  return n;
}

CinStmt vector_copy(int64_t n) { return lower_to_cin(parse_statement("A(i) = B(i)", {{"i", n}})); }

}  // namespace

TEST(Split, Extents) {
  CinStmt s = split(vector_copy(12), "i", "io", "ii", 5);
  EXPECT_EQ(extent_of(s, "io"), 3);
  EXPECT_EQ(extent_of(s, "ii"), 5);
  EXPECT_EQ(valid_points(s), 12);
  EXPECT_EQ(extent_of(split(vector_copy(12), "i", "io", "ii", 12), "io"), 1);
  CinStmt one = split(vector_copy(12), "i", "io", "ii", 1);
  EXPECT_EQ(extent_of(one, "io"), 12);
  EXPECT_EQ(extent_of(one, "ii"), 1);
}

TEST(Split, Errors) {
  EXPECT_EQ(code_of([] { split(gemm(2), "q", "qo", "qi", 2); }), ErrorCode::UnknownVar);
  EXPECT_EQ(code_of([] { split(gemm(2), "k", "j", "ki", 2); }), ErrorCode::NonFreshVar);
  EXPECT_EQ(code_of([] { split(gemm(2), "k", "ko", "ko", 2); }), ErrorCode::NonFreshVar);
}

TEST(Divide, Extents) {
  CinStmt s = divide(vector_copy(12), "i", "io", "ii", 3);
  EXPECT_EQ(extent_of(s, "io"), 3);
  EXPECT_EQ(extent_of(s, "ii"), 4);
  CinStmt r = divide(vector_copy(10), "i", "io", "ii", 3);
  EXPECT_EQ(extent_of(r, "ii"), 4);
  // 3*4 = 12 candidate points, the guard drops 2.
  EXPECT_EQ(valid_points(r), 10);
  EXPECT_EQ(extent_of(divide(vector_copy(7), "i", "io", "ii", 7), "ii"), 1);
}

TEST(Divide, Printed) {
  CinStmt s = divide(vector_copy(4), "i", "io", "ii", 2);
  EXPECT_EQ(to_string(s), "forall(io) forall(ii) A(i) = B(i) s.t. divide(i,io,ii,2)");
}

TEST(Reorder, Examples) {
  CinStmt s = reorder(gemm(3), {"k", "i", "j"});
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"k", "i", "j"}));
  EXPECT_TRUE(same_result(gemm_stmt(3), s));
}

TEST(Reorder, Errors) {
  EXPECT_EQ(code_of([] { reorder(gemm(2), {"i", "i"}); }), ErrorCode::NotPermutation);
  EXPECT_EQ(code_of([] { reorder(gemm(2), {"k", "i"}); }), ErrorCode::NotContiguousNest);
  CinStmt other = lower_to_cin(parse_statement("x(p) = y(p)", {{"p", 3}}));
  CinStmt seq = Seq{{gemm(2), other}};
  EXPECT_EQ(code_of([&] { reorder(seq, {"p", "i"}); }), ErrorCode::NotContiguousNest);
  EXPECT_EQ(loop_nest_orders(reorder(seq, {"j", "i"}))[0], (std::vector<std::string>{"j", "i", "k"}));
}

TEST(Reorder, Summa) {
  CinStmt s = distribute(gemm(4), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{2, 2});
  s = split(s, "k", "ko", "ki", 2);
  s = reorder(s, {"ko", "ii", "ji", "ki"});
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"io", "jo", "ko", "ii", "ji", "ki"}));
  EXPECT_TRUE(same_result(gemm_stmt(4), s));
}

TEST(Distribute, SimpleKeepsOrder) {
  CinStmt s = distribute(gemm(3), std::vector<std::string>{"j"});
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"i", "j", "k"}));
  EXPECT_EQ(to_string(s), "forall(i) forall(j) forall(k) A(i,j) += B(i,k) * C(k,j) s.t. distribute(j)");
  EXPECT_EQ(code_of([] { distribute(gemm(2), std::vector<std::string>{"q"}); }), ErrorCode::UnknownVar);
}

TEST(Distribute, CompoundGemm) {
  CinStmt s = distribute(gemm(4), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{2, 2});
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"io", "jo", "ii", "ji", "k"}));
  EXPECT_EQ(to_string(s),
            "forall(io) forall(jo) forall(ii) forall(ji) forall(k) A(i,j) += B(i,k) * C(k,j) s.t. "
            "divide(i,io,ii,gx), divide(j,jo,ji,gy), distribute(io,jo)");
  EXPECT_TRUE(same_result(gemm_stmt(4), s));
}

TEST(Distribute, OneByOne) {
  CinStmt s = distribute(gemm(3), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{1, 1});
  EXPECT_TRUE(same_result(gemm_stmt(3), s));
}

TEST(Distribute, Johnson) {
  CinStmt s = distribute(gemm(4), {"i", "j", "k"}, {"io", "jo", "ko"}, {"ii", "ji", "ki"}, Grid{2, 2, 2});
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"io", "jo", "ko", "ii", "ji", "ki"}));
  auto rels = strip_relations(s).second;
  EXPECT_EQ(std::get<Distribute>(rels.back()).vars, (std::vector<std::string>{"io", "jo", "ko"}));
}

TEST(Distribute, Errors) {
  EXPECT_EQ(code_of([] { distribute(gemm(2), {"i", "j"}, {"io"}, {"ii", "ji"}, Grid{2, 2}); }),
            ErrorCode::DimCountMismatch);
  EXPECT_EQ(code_of([] { distribute(gemm(2), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{2}); }),
            ErrorCode::DimCountMismatch);
  EXPECT_EQ(code_of([] { distribute(gemm(2), {"q"}, {"qo"}, {"qi"}, Grid{2}); }), ErrorCode::UnknownVar);
}

TEST(Communicate, ReplacesEarlier) {
  CinStmt s = communicate(gemm(2), {"A", "B"}, "i");
  s = communicate(s, {"B", "C"}, "k");
  EXPECT_EQ(to_string(s),
            "forall(i) forall(j) forall(k) A(i,j) += B(i,k) * C(k,j) s.t. communicate(A,i), communicate({B,C},k)");
  EXPECT_EQ(code_of([] { communicate(gemm(2), {"Z"}, "i"); }), ErrorCode::UnknownTensor);
  EXPECT_EQ(code_of([] { communicate(gemm(2), {"A"}, "q"); }), ErrorCode::UnknownVar);
}

TEST(Rotate, Cannon3x3) {
  CinStmt s = distribute(gemm(3), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{3, 3});
  s = divide(s, "k", "ko", "ki", 3);
  s = reorder(s, {"ko", "ii", "ji", "ki"});
  s = rotate(s, "ko", {"io", "jo"}, "kos");
  EXPECT_EQ(loop_nest_order(s), (std::vector<std::string>{"io", "jo", "kos", "ii", "ji", "ki"}));
  // Processor (io,jo) at step kos touches the B tile column (kos+io+jo) mod 3.
  Nest nest = flatten_nests(s).front();
  VarResolver res(nest.loops, nest.relations);
  std::vector<int64_t> v(res.num_slots(), 0);
  for (int64_t io = 0; io < 3; ++io)
    for (int64_t jo = 0; jo < 3; ++jo)
      for (int64_t step = 0; step < 3; ++step) {
        std::fill(v.begin(), v.end(), 0);
        v[0] = io;
        v[1] = jo;
        v[2] = step;
        ASSERT_TRUE(res.resolve(v));
        EXPECT_EQ(v[res.require_slot("ko")], (step + io + jo) % 3);
      }
}

TEST(Rotate, IdentityWhenEmpty) {
  CinStmt s = rotate(gemm(3), "k", {}, "r");
  Nest nest = flatten_nests(s).front();
  VarResolver res(nest.loops, nest.relations);
  std::vector<int64_t> v(res.num_slots(), 0);
  for (int64_t r = 0; r < 3; ++r) {
    v[2] = r;
    ASSERT_TRUE(res.resolve(v));
    EXPECT_EQ(v[res.require_slot("k")], r);
  }
}

TEST(Rotate, PreservesGemm6x6On3x3) {
  CinStmt s = distribute(gemm(6), {"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{3, 3});
  s = divide(s, "k", "ko", "ki", 3);
  s = reorder(s, {"ko", "ii", "ji", "ki"});
  s = rotate(s, "ko", {"io", "jo"}, "kos");
  EXPECT_TRUE(same_result(gemm_stmt(6), s, 9));
}

TEST(Rotate, Errors) {
  EXPECT_EQ(code_of([] { rotate(gemm(3), "i", {"k"}, "r"); }), ErrorCode::IBelowT);
  EXPECT_EQ(code_of([] { rotate(gemm(3), "k", {"q"}, "r"); }), ErrorCode::UnknownVar);
  EXPECT_EQ(code_of([] { rotate(gemm(3), "q", {}, "r"); }), ErrorCode::UnknownVar);
  EXPECT_EQ(code_of([] { rotate(gemm(3), "k", {"i"}, "j"); }), ErrorCode::NonFreshVar);
}

TEST(Substitute, Examples) {
  CinStmt s = split(gemm(5), "k", "ko", "ki", 2);
  CinStmt b = substitute_leaf(s, {"j", "ko", "ki"}, "blocked");
  EXPECT_TRUE(same_result(gemm_stmt(5), b));
  EXPECT_EQ(code_of([&] { substitute_leaf(s, {"i", "j"}, "blocked"); }), ErrorCode::NotInnermost);
  EXPECT_TRUE(same_result(gemm_stmt(5), s));
}

TEST(ScheduleText, RoundTrip) {
  Schedule s;
  s.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{2, 2})
      .split("k", "ko", "ki", 2)
      .reorder({"ko", "ii", "ji", "ki"})
      .communicate({"A"}, "jo")
      .communicate({"B", "C"}, "ko")
      .rotate("ko", {}, "kr")
      .divide("ii", "iio", "iii", 2, "gz")
      .parallelize("iii")
      .substitute({"iii", "ji", "ki"}, "interp");
  std::string text = s.to_text();
  Schedule p = Schedule::parse("# comment\n" + text);
  EXPECT_EQ(p.to_text(), text);
  EXPECT_EQ(to_string(p.apply(gemm(4))), to_string(s.apply(gemm(4))));
  EXPECT_EQ(s.explain(gemm(4)).size(), 9u);
  EXPECT_EQ(code_of([] { Schedule::parse("twist i"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { Schedule::parse("split k ko ki x"); }), ErrorCode::ParseError);
}

TEST(Preservation, FuzzedChains) {
  std::mt19937_64 rng(20240521);
  int chains = 0, nonempty = 0;
  for (; chains < 1200; ++chains) {
    auto fc = fuzz::random_chain(rng);
    nonempty += !fc.commands.empty();
    ASSERT_NO_THROW(check_well_formed(fc.transformed));
    TensorMap a = random_inputs(fc.stmt, static_cast<uint64_t>(chains)), b = a;
    interpret(fc.original, a);
    interpret(fc.transformed, b);
    const std::string& out = fc.stmt.lhs.tensor.name;
    ASSERT_TRUE(bit_equal(a.at(out), b.at(out))) << fc.kernel << "\n" << to_string(fc.transformed);
  }
  EXPECT_GE(nonempty, 1000);
}
