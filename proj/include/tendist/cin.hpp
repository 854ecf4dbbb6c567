#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tendist/tensor_ir.hpp"

namespace tendist {

// ---- scheduling relations -------------------------------------------------

/// parent = outer * extent(inner) + inner, with outer extent = parts.
struct Divide {
  std::string parent, outer, inner;
  int64_t parts = 1;
  int64_t parent_extent = 0;
  std::string label;  // printed instead of `parts` when set, e.g. "gx"
  bool operator==(const Divide&) const = default;
};

/// parent = outer * chunk + inner, with inner extent = chunk.
struct Split {
  std::string parent, outer, inner;
  int64_t chunk = 1;
  int64_t parent_extent = 0;
  bool operator==(const Split&) const = default;
};

struct Distribute {
  std::vector<std::string> vars;
  bool operator==(const Distribute&) const = default;
};

/// target = (result + sum(over)) mod extent.
struct Rotate {
  std::string target;
  std::vector<std::string> over;
  std::string result;
  int64_t extent = 0;
  bool operator==(const Rotate&) const = default;
};

struct Communicate {
  std::vector<std::string> tensors;
  std::string at;
  bool operator==(const Communicate&) const = default;
};

struct LeafKernel {
  std::vector<std::string> vars;
  std::string kernel;
  bool operator==(const LeafKernel&) const = default;
};

struct Parallelize {
  std::string var;
  bool operator==(const Parallelize&) const = default;
};

/// Restricts a loop to a single value (fixed machine dimension of a placement).
struct Fix {
  std::string var;
  int64_t value = 0;
  bool operator==(const Fix&) const = default;
};

using Relation =
    std::variant<Divide, Split, Distribute, Rotate, Communicate, LeafKernel, Parallelize, Fix>;

std::string to_string(const Relation& r);

// ---- statements -----------------------------------------------------------

struct Forall;
struct Assign;
struct Reduce;
struct Place;
struct Seq;
struct SuchThat;

class CinStmt {
 public:
  using Node = std::variant<Forall, Assign, Reduce, Place, Seq, SuchThat>;

  CinStmt(Forall f);
  CinStmt(Assign a);
  CinStmt(Reduce r);
  CinStmt(Place p);
  CinStmt(Seq s);
  CinStmt(SuchThat s);

  const Node& node() const;

  template <class T>
  bool is() const;
  template <class T>
  const T& as() const;

 private:
  std::shared_ptr<const Node> node_;
};

struct Forall {
  IndexVar var;
  CinStmt body;
};

struct Assign {
  Access lhs;
  Expr rhs;
};

struct Reduce {
  Access lhs;
  Expr rhs;
};

/// Materializes a tensor in the memories its distribution assigns (placement statements).
struct Place {
  Access target;
};

struct Seq {
  std::vector<CinStmt> stmts;
};

struct SuchThat {
  CinStmt body;
  std::vector<Relation> relations;
};

inline const CinStmt::Node& CinStmt::node() const { return *node_; }

template <class T>
bool CinStmt::is() const {
  return std::holds_alternative<T>(*node_);
}

template <class T>
const T& CinStmt::as() const {
  return std::get<T>(*node_);
}

std::string to_string(const CinStmt& s);

/// Wraps `body` with relations; an empty list returns the body unchanged and
/// an existing root SuchThat is merged rather than nested.
CinStmt such_that(const CinStmt& body, std::vector<Relation> relations);

/// Splits a statement into (body, relations) when its root is a SuchThat.
std::pair<CinStmt, std::vector<Relation>> strip_relations(const CinStmt& s);

/// Moves every nested SuchThat to the root of its statement (per Seq branch).
CinStmt canonicalize(const CinStmt& s);

/// Nest construction from a tensor index statement, left-to-right variable order.
CinStmt lower_to_cin(const TensorIndexStmt& stmt);

/// Outermost-to-innermost Forall variables. Throws IllFormed on a Seq.
std::vector<std::string> loop_nest_order(const CinStmt& s);
/// One list per Seq branch (a single list when there is no Seq).
std::vector<std::vector<std::string>> loop_nest_orders(const CinStmt& s);

/// Variables defined by relations (divide/split parents, rotate targets).
std::vector<std::string> derived_variables(const std::vector<Relation>& rels);

/// A perfect loop nest: Forall chain, leaf statement, and the relations in scope.
struct Nest {
  std::vector<IndexVar> loops;
  CinStmt leaf;
  std::vector<Relation> relations;
};

/// Decomposes a statement into its nests (one per Seq branch).
std::vector<Nest> flatten_nests(const CinStmt& s);

/// Throws IllFormed when a binding, freshness or rotate-ordering rule is violated.
void check_well_formed(const CinStmt& s);

// ---- derived-variable arithmetic -----------------------------------------

/// Computes the values of derived variables from loop variables.
/// Slots 0..loops-1 are loop variables; further slots hold derived ones.
class VarResolver {
 public:
  VarResolver(const std::vector<IndexVar>& loops, const std::vector<Relation>& relations);

  std::size_t num_slots() const { return names_.size(); }
  std::optional<std::size_t> slot(const std::string& name) const;
  std::size_t require_slot(const std::string& name) const;
  const std::string& name(std::size_t slot) const { return names_[slot]; }
  int64_t extent(std::size_t slot) const { return extents_[slot]; }

  /// Fills derived slots; false when a ragged guard or fix constraint fails.
  bool resolve(std::span<int64_t> values) const;

  struct Rule {
    enum class Kind { Affine, Rotate } kind;
    std::size_t target;
    std::vector<std::size_t> inputs;  // affine: {outer, inner}; rotate: {result, over...}
    int64_t stride = 1;               // affine: value multiplying outer
    int64_t limit = 0;                // affine guard / rotate modulus
  };
  const std::vector<Rule>& rules() const { return rules_; }
  const std::vector<std::pair<std::size_t, int64_t>>& fixes() const { return fixes_; }

 private:
  std::vector<std::string> names_;
  std::vector<int64_t> extents_;
  std::map<std::string, std::size_t> index_;
  std::vector<Rule> rules_;  // topological order
  std::vector<std::pair<std::size_t, int64_t>> fixes_;
};

// ---- leaf kernels ----------------------------------------------------------

/// A leaf kernel chooses the order in which points of its loop sub-nest are
/// visited; `visit` executes the body at one point.
using LeafKernelFn = std::function<void(std::span<const int64_t> extents,
                                        const std::function<void(std::span<const int64_t>)>& visit)>;

class KernelRegistry {
 public:
  /// Registry holding "interp" (lexicographic) and "blocked" (2x2 tiles over the
  /// first two leaf variables, remaining variables innermost).
  static const KernelRegistry& defaults();

  void add(const std::string& name, LeafKernelFn fn) { kernels_[name] = std::move(fn); }
  const LeafKernelFn& get(const std::string& name) const;
  bool contains(const std::string& name) const { return kernels_.count(name) != 0; }

 private:
  std::map<std::string, LeafKernelFn> kernels_;
};

// ---- nest execution --------------------------------------------------------

/// Executes one Nest point by point. Reads and writes go through callbacks so
/// the same walker serves the single-memory interpreter and the simulator.
class NestExecutor {
 public:
  struct AccessInfo {
    std::string tensor;
    std::vector<std::size_t> slots;
  };

  using ReadFn = std::function<double(std::size_t access, std::span<const int64_t> coord)>;
  using WriteFn = std::function<void(std::span<const int64_t> coord, double value, bool accumulate)>;
  using IterFn = std::function<void(std::size_t depth, std::span<const int64_t> values)>;

  NestExecutor(Nest nest, const KernelRegistry& kernels = KernelRegistry::defaults());

  const Nest& nest() const { return nest_; }
  const VarResolver& resolver() const { return resolver_; }
  const AccessInfo& lhs() const { return lhs_; }
  const std::vector<AccessInfo>& rhs() const { return rhs_; }
  bool is_place() const { return leaf_kind_ == LeafKind::Place; }
  bool accumulates() const { return leaf_kind_ == LeafKind::Reduce; }
  /// Number of loops above the leaf-kernel sub-nest.
  std::size_t kernel_depth() const { return kernel_depth_; }

  /// Runs loops[depth..] with values[0..depth) already set. `on_iter` fires
  /// before each iteration of every loop above the leaf-kernel sub-nest.
  void run(std::vector<int64_t>& values, std::size_t depth, const ReadFn& read,
           const WriteFn& write, const IterFn& on_iter = {}) const;

  /// Executes the body at a fully assigned loop point (derived slots filled here).
  void execute_point(std::vector<int64_t>& values, const ReadFn& read, const WriteFn& write) const;

 private:
  enum class LeafKind { Assign, Reduce, Place };
  Nest nest_;
  VarResolver resolver_;
  LeafKind leaf_kind_;
  std::optional<Expr> rhs_expr_;
  AccessInfo lhs_;
  std::vector<AccessInfo> rhs_;
  std::size_t kernel_depth_;
  const LeafKernelFn* kernel_ = nullptr;
};

/// Single-memory reference execution. Missing lhs tensors are created zeroed.
void interpret(const CinStmt& s, TensorMap& env,
               const KernelRegistry& kernels = KernelRegistry::defaults());

}  // namespace tendist
