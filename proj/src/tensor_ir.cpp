#include "tendist/tensor_ir.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

namespace tendist {

TensorVar::TensorVar(std::string name, std::vector<int64_t> dims)
    : name(std::move(name)), dims(std::move(dims)) {
  for (int64_t d : this->dims) {
    if (d <= 0) fail(ErrorCode::ExtentMismatch, "tensor " + this->name + " has non-positive dim");
  }
}

int64_t TensorVar::volume() const {
  int64_t v = 1;
  for (int64_t d : dims) v *= d;
  return v;
}

Access make_access(const TensorVar& tensor, std::vector<IndexVar> indices) {
  if (indices.size() != tensor.order()) {
    fail(ErrorCode::ArityMismatch, tensor.name + " has order " + std::to_string(tensor.order()) +
                                       " but is indexed by " + std::to_string(indices.size()) +
                                       " variables");
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    IndexVar& v = indices[k];
    if (v.extent != 0 && v.extent != tensor.dims[k]) {
      fail(ErrorCode::ExtentMismatch, "variable " + v.name + " bound to " +
                                          std::to_string(v.extent) + " and " +
                                          std::to_string(tensor.dims[k]));
    }
    v.extent = tensor.dims[k];
  }
  return Access{tensor, std::move(indices)};
}

struct Expr::Node {
  Kind kind;
  Access access;
  double value = 0.0;
  std::vector<Expr> kids;
};

Expr::Expr(Access access)
    : node_(std::make_shared<const Node>(Node{Kind::Access, std::move(access), 0.0, {}})) {}

Expr::Expr(double value) : node_(std::make_shared<const Node>(Node{Kind::Literal, {}, value, {}})) {}

Expr Expr::add(Expr a, Expr b) {
  return Expr(std::make_shared<const Node>(Node{Kind::Add, {}, 0.0, {std::move(a), std::move(b)}}));
}

Expr Expr::mul(Expr a, Expr b) {
  return Expr(std::make_shared<const Node>(Node{Kind::Mul, {}, 0.0, {std::move(a), std::move(b)}}));
}

Expr::Kind Expr::kind() const { return node_->kind; }
const Access& Expr::access() const { return node_->access; }
double Expr::literal() const { return node_->value; }
const Expr& Expr::left() const { return node_->kids.at(0); }
const Expr& Expr::right() const { return node_->kids.at(1); }

std::vector<Access> Expr::accesses() const {
  std::vector<Access> out;
  switch (kind()) {
    case Kind::Access:
      out.push_back(access());
      break;
    case Kind::Literal:
      break;
    case Kind::Add:
    case Kind::Mul:
      for (const Expr& k : node_->kids) {
        auto sub = k.accesses();
        out.insert(out.end(), sub.begin(), sub.end());
      }
      break;
  }
  return out;
}

std::vector<TensorVar> TensorIndexStmt::tensors() const {
  std::vector<TensorVar> out{lhs.tensor};
  for (const Access& a : rhs.accesses()) {
    auto same = [&](const TensorVar& t) { return t.name == a.tensor.name; };
    if (std::none_of(out.begin(), out.end(), same)) out.push_back(a.tensor);
  }
  return out;
}

std::vector<IndexVar> TensorIndexStmt::loop_order() const {
  std::vector<IndexVar> out = free_vars;
  out.insert(out.end(), reduction_vars.begin(), reduction_vars.end());
  return out;
}

TensorIndexStmt build_statement(Access lhs, Expr rhs) {
  std::map<std::string, int64_t> extent;
  std::map<std::string, TensorVar> tensor_of;
  auto check = [&](const Access& a) {
    if (a.indices.size() != a.tensor.order()) {
      fail(ErrorCode::ArityMismatch, "access to " + a.tensor.name);
    }
    auto [it, fresh] = tensor_of.emplace(a.tensor.name, a.tensor);
    if (!fresh && it->second.dims != a.tensor.dims) {
      fail(ErrorCode::ArityMismatch, "tensor " + a.tensor.name + " used with two shapes");
    }
    for (std::size_t k = 0; k < a.indices.size(); ++k) {
      const std::string& n = a.indices[k].name;
      int64_t d = a.tensor.dims[k];
      auto [e, inserted] = extent.emplace(n, d);
      if (!inserted && e->second != d) {
        fail(ErrorCode::ExtentMismatch, "variable " + n + " bound to " + std::to_string(e->second) +
                                            " and " + std::to_string(d));
      }
    }
  };
  check(lhs);
  auto rhs_accesses = rhs.accesses();
  for (const Access& a : rhs_accesses) check(a);

  TensorIndexStmt s{lhs, rhs, AssignMode::Assign, {}, {}};
  for (const IndexVar& v : lhs.indices) {
    if (std::find(s.free_vars.begin(), s.free_vars.end(), v) == s.free_vars.end()) {
      s.free_vars.emplace_back(v.name, extent[v.name]);
    }
  }
  for (const Access& a : rhs_accesses) {
    for (const IndexVar& v : a.indices) {
      bool known = std::find(s.free_vars.begin(), s.free_vars.end(), v) != s.free_vars.end() ||
                   std::find(s.reduction_vars.begin(), s.reduction_vars.end(), v) !=
                       s.reduction_vars.end();
      if (!known) s.reduction_vars.emplace_back(v.name, extent[v.name]);
    }
  }
  s.mode = s.reduction_vars.empty() ? AssignMode::Assign : AssignMode::SumReduce;
  return s;
}

DenseTensor::DenseTensor(std::vector<int64_t> dims, double fill) : dims_(std::move(dims)) {
  int64_t n = 1;
  for (int64_t d : dims_) n *= d;
  data_.assign(static_cast<std::size_t>(n), fill);
}

DenseTensor::DenseTensor(std::vector<int64_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  int64_t n = 1;
  for (int64_t d : dims_) n *= d;
  if (n != static_cast<int64_t>(data_.size())) {
    fail(ErrorCode::ExtentMismatch, "payload length does not match dims");
  }
}

int64_t DenseTensor::linear_index(std::span<const int64_t> coord) const {
  int64_t idx = 0;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (coord[k] < 0 || coord[k] >= dims_[k]) {
      fail(ErrorCode::OutOfBounds, "coordinate outside tensor");
    }
    idx = idx * dims_[k] + coord[k];
  }
  return idx;
}

bool bit_equal(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) return INFINITY;
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    m = std::max(m, std::fabs(a.data()[k] - b.data()[k]));
  }
  return m;
}

bool next_coord(std::span<int64_t> coord, std::span<const int64_t> extents) {
  for (std::size_t k = coord.size(); k-- > 0;) {
    if (++coord[k] < extents[k]) return true;
    coord[k] = 0;
  }
  return false;
}

DenseTensor sequential_evaluate(const TensorIndexStmt& stmt, const TensorMap& inputs) {
  for (const TensorVar& t : stmt.tensors()) {
    if (t.name == stmt.lhs.tensor.name) continue;
    auto it = inputs.find(t.name);
    if (it == inputs.end()) fail(ErrorCode::MissingInput, "no value for " + t.name);
    if (it->second.dims() != t.dims) {
      fail(ErrorCode::ExtentMismatch, "input " + t.name + " has wrong dims");
    }
  }

  std::vector<IndexVar> order = stmt.loop_order();
  std::map<std::string, std::size_t> slot;
  std::vector<int64_t> extents;
  for (std::size_t k = 0; k < order.size(); ++k) {
    slot[order[k].name] = k;
    extents.push_back(order[k].extent);
  }
  for (int64_t e : extents) {
    if (e == 0) return DenseTensor(stmt.lhs.tensor.dims);
  }

  DenseTensor out(stmt.lhs.tensor.dims);
  std::vector<int64_t> point(order.size(), 0);
  std::vector<int64_t> coord;
  auto coord_of = [&](const Access& a) {
    coord.resize(a.indices.size());
    for (std::size_t k = 0; k < a.indices.size(); ++k) coord[k] = point[slot.at(a.indices[k].name)];
    return std::span<const int64_t>(coord);
  };
  auto read = [&](const Access& a) {
    if (a.tensor.name == stmt.lhs.tensor.name) return out.at(coord_of(a));
    return inputs.at(a.tensor.name).at(coord_of(a));
  };
  do {
    double v = evaluate_expr(stmt.rhs, read);
    double& dst = out.at(coord_of(stmt.lhs));
    if (stmt.mode == AssignMode::SumReduce) {
      dst += v;
    } else {
      dst = v;
    }
  } while (next_coord(point, extents));
  return out;
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const std::map<std::string, int64_t>& extents)
      : text_(text), extents_(extents) {}

  TensorIndexStmt statement() {
    Access lhs = access();
    skip();
    if (peek() == '+') ++pos_;
    expect('=');
    Expr rhs = sum();
    skip();
    if (pos_ != text_.size()) error("trailing input");
    return build_statement(std::move(lhs), std::move(rhs));
  }

 private:
  Expr sum() {
    Expr e = product();
    while (skip(), peek() == '+') {
      ++pos_;
      e = e + product();
    }
    return e;
  }

  Expr product() {
    Expr e = factor();
    while (skip(), peek() == '*') {
      ++pos_;
      e = e * factor();
    }
    return e;
  }

  Expr factor() {
    skip();
    char c = peek();
    if (c == '(') {
      ++pos_;
      Expr e = sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-') {
      std::size_t start = pos_;
      ++pos_;
      while (pos_ < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
              text_[pos_] == 'e' || text_[pos_] == 'E')) {
        ++pos_;
      }
      try {
        return Expr(std::stod(std::string(text_.substr(start, pos_ - start))));
      } catch (const std::exception&) {
        error("bad number");
      }
    }
    return Expr(access());
  }

  Access access() {
    std::string name = ident();
    std::vector<std::string> vars;
    skip();
    if (peek() == '(') {
      ++pos_;
      skip();
      if (peek() != ')') {
        vars.push_back(ident());
        while (skip(), peek() == ',') {
          ++pos_;
          vars.push_back(ident());
        }
      }
      expect(')');
    }
    std::vector<int64_t> dims;
    std::vector<IndexVar> idx;
    for (const std::string& v : vars) {
      auto it = extents_.find(v);
      if (it == extents_.end()) error("no extent given for variable " + v);
      dims.push_back(it->second);
      idx.emplace_back(v);
    }
    auto [it, fresh] = shapes_.emplace(name, dims.size());
    if (!fresh && it->second != dims.size()) {
      fail(ErrorCode::ArityMismatch, "tensor " + name + " used with two orders");
    }
    return make_access(TensorVar(name, dims), std::move(idx));
  }

  std::string ident() {
    skip();
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_ || std::isdigit(static_cast<unsigned char>(text_[start]))) {
      error("expected identifier");
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void expect(char c) {
    skip();
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::ParseError, what + " at column " + std::to_string(pos_) + " in '" +
                                    std::string(text_) + "'");
  }

  std::string_view text_;
  const std::map<std::string, int64_t>& extents_;
  std::map<std::string, std::size_t> shapes_;
  std::size_t pos_ = 0;
};

}  // namespace

TensorIndexStmt parse_statement(std::string_view text,
                                const std::map<std::string, int64_t>& extents) {
  return Parser(text, extents).statement();
}

std::string to_string(const Access& a) {
  std::string s = a.tensor.name + "(";
  for (std::size_t k = 0; k < a.indices.size(); ++k) {
    if (k) s += ",";
    s += a.indices[k].name;
  }
  return s + ")";
}

std::string to_string(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Access:
      return to_string(e.access());
    case Expr::Kind::Literal: {
      std::ostringstream os;
      os << e.literal();
      return os.str();
    }
    case Expr::Kind::Add:
      return to_string(e.left()) + " + " + to_string(e.right());
    case Expr::Kind::Mul: {
      auto wrap = [](const Expr& x) {
        return x.kind() == Expr::Kind::Add ? "(" + to_string(x) + ")" : to_string(x);
      };
      return wrap(e.left()) + " * " + wrap(e.right());
    }
  }
  return {};
}

std::string to_string(const TensorIndexStmt& s) {
  return to_string(s.lhs) + (s.mode == AssignMode::SumReduce ? " += " : " = ") + to_string(s.rhs);
}

}  // namespace tendist
