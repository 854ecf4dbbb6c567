#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tendist/error.hpp"

namespace tendist {

/// A loop variable. Identity is the name; the extent is filled in once the
/// variable is bound to a tensor dimension (0 means unbound).
struct IndexVar {
  std::string name;
  int64_t extent = 0;

  IndexVar() = default;
  IndexVar(std::string name, int64_t extent = 0) : name(std::move(name)), extent(extent) {}
  IndexVar(const char* name) : name(name) {}

  bool operator==(const IndexVar& o) const { return name == o.name; }
  bool operator<(const IndexVar& o) const { return name < o.name; }
};

struct Access;

struct TensorVar {
  std::string name;
  std::vector<int64_t> dims;

  TensorVar() = default;
  TensorVar(std::string name, std::vector<int64_t> dims);

  std::size_t order() const { return dims.size(); }
  int64_t volume() const;

  template <class... Vars>
  Access operator()(Vars&&... vars) const;

  bool operator==(const TensorVar&) const = default;
};

struct Access {
  TensorVar tensor;
  std::vector<IndexVar> indices;

  bool operator==(const Access& o) const {
    return tensor == o.tensor && indices == o.indices;
  }
};

/// Builds an access and binds each variable's extent to the indexed dimension.
Access make_access(const TensorVar& tensor, std::vector<IndexVar> indices);

template <class... Vars>
Access TensorVar::operator()(Vars&&... vars) const {
  return make_access(*this, std::vector<IndexVar>{IndexVar(std::forward<Vars>(vars))...});
}

/// Right-hand side expression tree: accesses, constants, + and *.
class Expr {
 public:
  enum class Kind { Access, Literal, Add, Mul };

  Expr(Access access);
  Expr(double value);

  static Expr add(Expr a, Expr b);
  static Expr mul(Expr a, Expr b);

  Kind kind() const;
  const Access& access() const;
  double literal() const;
  const Expr& left() const;
  const Expr& right() const;

  /// Accesses in left-to-right textual order.
  std::vector<Access> accesses() const;

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

inline Expr operator+(Expr a, Expr b) { return Expr::add(std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return Expr::mul(std::move(a), std::move(b)); }
inline Expr operator+(Access a, Access b) { return Expr(std::move(a)) + Expr(std::move(b)); }
inline Expr operator*(Access a, Access b) { return Expr(std::move(a)) * Expr(std::move(b)); }

/// Evaluates an expression; `read` maps each access to its value at the current point.
template <class ReadFn>
double evaluate_expr(const Expr& e, ReadFn&& read) {
  switch (e.kind()) {
    case Expr::Kind::Access:
      return read(e.access());
    case Expr::Kind::Literal:
      return e.literal();
    case Expr::Kind::Add:
      return evaluate_expr(e.left(), read) + evaluate_expr(e.right(), read);
    case Expr::Kind::Mul:
      return evaluate_expr(e.left(), read) * evaluate_expr(e.right(), read);
  }
  return 0.0;
}

enum class AssignMode { Assign, SumReduce };

struct TensorIndexStmt {
  Access lhs;
  Expr rhs;
  AssignMode mode = AssignMode::Assign;
  std::vector<IndexVar> free_vars;       // lhs variables, written order
  std::vector<IndexVar> reduction_vars;  // rhs-only variables, first-appearance order

  /// Every tensor in the statement, lhs first, then rhs in first-appearance order.
  std::vector<TensorVar> tensors() const;
  /// free_vars followed by reduction_vars.
  std::vector<IndexVar> loop_order() const;
};

TensorIndexStmt build_statement(Access lhs, Expr rhs);

/// Row-major dense tensor of doubles. A scalar has no dims and one element.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}
  explicit DenseTensor(std::vector<int64_t> dims, double fill = 0.0);
  DenseTensor(std::vector<int64_t> dims, std::vector<double> data);

  const std::vector<int64_t>& dims() const { return dims_; }
  std::size_t order() const { return dims_.size(); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  int64_t linear_index(std::span<const int64_t> coord) const;
  double at(std::span<const int64_t> coord) const { return data_[linear_index(coord)]; }
  double& at(std::span<const int64_t> coord) { return data_[linear_index(coord)]; }
  double at(std::initializer_list<int64_t> coord) const {
    return at(std::span<const int64_t>(coord.begin(), coord.size()));
  }
  double& at(std::initializer_list<int64_t> coord) {
    return at(std::span<const int64_t>(coord.begin(), coord.size()));
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const DenseTensor&) const = default;

 private:
  std::vector<int64_t> dims_;
  std::vector<double> data_;
};

/// True when dims match and every element has the identical bit pattern.
bool bit_equal(const DenseTensor& a, const DenseTensor& b);
double max_abs_diff(const DenseTensor& a, const DenseTensor& b);

using TensorMap = std::map<std::string, DenseTensor>;

/// Reference evaluator. Free variables are visited lexicographically and each
/// output element accumulates its reduction points in lexicographic order.
DenseTensor sequential_evaluate(const TensorIndexStmt& stmt, const TensorMap& inputs);

/// Parses `A(i,j) = B(i,k) * C(k,j)`. Tensor dims come from the variable extents.
TensorIndexStmt parse_statement(std::string_view text,
                                const std::map<std::string, int64_t>& extents);

std::string to_string(const Access& access);
std::string to_string(const Expr& expr);
std::string to_string(const TensorIndexStmt& stmt);

/// Advances a row-major odometer over `extents`; returns false after the last point.
bool next_coord(std::span<int64_t> coord, std::span<const int64_t> extents);

}  // namespace tendist
