#include "tendist/cin.hpp"

#include <algorithm>
#include <set>

namespace tendist {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string join(const std::vector<std::string>& xs, const char* sep = ",") {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += sep;
    s += xs[k];
  }
  return s;
}

}  // namespace

std::string to_string(const Relation& r) {
  return std::visit(
      Overloaded{
          [](const Divide& d) {
            return "divide(" + d.parent + "," + d.outer + "," + d.inner + "," +
                   (d.label.empty() ? std::to_string(d.parts) : d.label) + ")";
          },
          [](const Split& s) {
            return "split(" + s.parent + "," + s.outer + "," + s.inner + "," +
                   std::to_string(s.chunk) + ")";
          },
          [](const Distribute& d) { return "distribute(" + join(d.vars) + ")"; },
          [](const Rotate& r) {
            return "rotate(" + r.target + ",{" + join(r.over) + "}," + r.result + ")";
          },
          [](const Communicate& c) {
            std::string ts = c.tensors.size() == 1 ? c.tensors[0] : "{" + join(c.tensors) + "}";
            return "communicate(" + ts + "," + c.at + ")";
          },
          [](const LeafKernel& l) { return "substitute({" + join(l.vars) + "}," + l.kernel + ")"; },
          [](const Parallelize& p) { return "parallelize(" + p.var + ")"; },
          [](const Fix& f) { return "fix(" + f.var + "," + std::to_string(f.value) + ")"; },
      },
      r);
}

CinStmt::CinStmt(Forall f) : node_(std::make_shared<const Node>(std::move(f))) {}
CinStmt::CinStmt(Assign a) : node_(std::make_shared<const Node>(std::move(a))) {}
CinStmt::CinStmt(Reduce r) : node_(std::make_shared<const Node>(std::move(r))) {}
CinStmt::CinStmt(Place p) : node_(std::make_shared<const Node>(std::move(p))) {}
CinStmt::CinStmt(Seq s) : node_(std::make_shared<const Node>(std::move(s))) {}
CinStmt::CinStmt(SuchThat s) : node_(std::make_shared<const Node>(std::move(s))) {}

std::string to_string(const CinStmt& s) {
  return std::visit(
      Overloaded{
          [](const Forall& f) { return "forall(" + f.var.name + ") " + to_string(f.body); },
          [](const Assign& a) { return to_string(a.lhs) + " = " + to_string(a.rhs); },
          [](const Reduce& r) { return to_string(r.lhs) + " += " + to_string(r.rhs); },
          [](const Place& p) { return to_string(p.target); },
          [](const Seq& q) {
            std::vector<std::string> parts;
            for (const CinStmt& b : q.stmts) parts.push_back(to_string(b));
            return join(parts, " ; ");
          },
          [](const SuchThat& st) {
            std::vector<std::string> parts;
            for (const Relation& r : st.relations) parts.push_back(to_string(r));
            return to_string(st.body) + " s.t. " + join(parts, ", ");
          },
      },
      s.node());
}

CinStmt such_that(const CinStmt& body, std::vector<Relation> relations) {
  if (relations.empty()) return body;
  if (body.is<SuchThat>()) {
    std::vector<Relation> all = body.as<SuchThat>().relations;
    all.insert(all.end(), relations.begin(), relations.end());
    return SuchThat{body.as<SuchThat>().body, std::move(all)};
  }
  return SuchThat{body, std::move(relations)};
}

std::pair<CinStmt, std::vector<Relation>> strip_relations(const CinStmt& s) {
  if (s.is<SuchThat>()) return {s.as<SuchThat>().body, s.as<SuchThat>().relations};
  return {s, {}};
}

namespace {

CinStmt hoist(const CinStmt& s, std::vector<Relation>& out) {
  if (s.is<SuchThat>()) {
    const auto& st = s.as<SuchThat>();
    out.insert(out.end(), st.relations.begin(), st.relations.end());
    return hoist(st.body, out);
  }
  if (s.is<Forall>()) {
    const auto& f = s.as<Forall>();
    return Forall{f.var, hoist(f.body, out)};
  }
  if (s.is<Seq>()) {
    Seq q;
    for (const CinStmt& b : s.as<Seq>().stmts) q.stmts.push_back(canonicalize(b));
    return q;
  }
  return s;
}

}  // namespace

CinStmt canonicalize(const CinStmt& s) {
  std::vector<Relation> rels;
  CinStmt body = hoist(s, rels);
  if (body.is<Seq>() && rels.empty()) return body;
  return such_that(body, std::move(rels));
}

CinStmt lower_to_cin(const TensorIndexStmt& stmt) {
  CinStmt body = stmt.mode == AssignMode::SumReduce ? CinStmt(Reduce{stmt.lhs, stmt.rhs})
                                                    : CinStmt(Assign{stmt.lhs, stmt.rhs});
  auto vars = stmt.loop_order();
  for (auto it = vars.rbegin(); it != vars.rend(); ++it) body = Forall{*it, body};
  return body;
}

std::vector<std::string> loop_nest_order(const CinStmt& s) {
  std::vector<std::string> out;
  const CinStmt* cur = &s;
  while (true) {
    if (cur->is<Forall>()) {
      out.push_back(cur->as<Forall>().var.name);
      cur = &cur->as<Forall>().body;
    } else if (cur->is<SuchThat>()) {
      cur = &cur->as<SuchThat>().body;
    } else if (cur->is<Seq>()) {
      fail(ErrorCode::IllFormed, "loop order of a sequence is per branch");
    } else {
      return out;
    }
  }
}

std::vector<std::vector<std::string>> loop_nest_orders(const CinStmt& s) {
  auto [body, rels] = strip_relations(s);
  if (!body.is<Seq>()) return {loop_nest_order(body)};
  std::vector<std::vector<std::string>> out;
  for (const CinStmt& b : body.as<Seq>().stmts) {
    auto sub = loop_nest_orders(b);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<std::string> derived_variables(const std::vector<Relation>& rels) {
  std::vector<std::string> out;
  for (const Relation& r : rels) {
    if (auto* d = std::get_if<Divide>(&r)) out.push_back(d->parent);
    if (auto* s = std::get_if<Split>(&r)) out.push_back(s->parent);
    if (auto* t = std::get_if<Rotate>(&r)) out.push_back(t->target);
  }
  return out;
}

namespace {

void collect_nests(const CinStmt& s, const std::vector<Relation>& outer, std::vector<Nest>& out) {
  CinStmt c = canonicalize(s);
  auto [body, rels] = strip_relations(c);
  std::vector<Relation> all = outer;
  all.insert(all.end(), rels.begin(), rels.end());
  if (body.is<Seq>()) {
    for (const CinStmt& b : body.as<Seq>().stmts) collect_nests(b, all, out);
    return;
  }
  Nest n{{}, body, all};
  const CinStmt* cur = &body;
  while (cur->is<Forall>()) {
    n.loops.push_back(cur->as<Forall>().var);
    cur = &cur->as<Forall>().body;
  }
  if (cur->is<Seq>() || cur->is<SuchThat>()) {
    fail(ErrorCode::IllFormed, "only perfect loop nests are supported below a forall");
  }
  n.leaf = *cur;
  out.push_back(std::move(n));
}

std::vector<Access> leaf_accesses(const CinStmt& leaf) {
  std::vector<Access> out;
  if (leaf.is<Assign>()) {
    out.push_back(leaf.as<Assign>().lhs);
    auto r = leaf.as<Assign>().rhs.accesses();
    out.insert(out.end(), r.begin(), r.end());
  } else if (leaf.is<Reduce>()) {
    out.push_back(leaf.as<Reduce>().lhs);
    auto r = leaf.as<Reduce>().rhs.accesses();
    out.insert(out.end(), r.begin(), r.end());
  } else if (leaf.is<Place>()) {
    out.push_back(leaf.as<Place>().target);
  }
  return out;
}

}  // namespace

std::vector<Nest> flatten_nests(const CinStmt& s) {
  std::vector<Nest> out;
  collect_nests(s, {}, out);
  return out;
}

void check_well_formed(const CinStmt& s) {
  auto nests = flatten_nests(s);
  bool single = nests.size() == 1;
  for (const Nest& n : nests) {
    std::map<std::string, std::size_t> depth;
    for (std::size_t k = 0; k < n.loops.size(); ++k) {
      if (!depth.emplace(n.loops[k].name, k).second) {
        fail(ErrorCode::IllFormed, "variable " + n.loops[k].name + " bound twice");
      }
    }
    std::set<std::string> defined;
    for (const std::string& d : derived_variables(n.relations)) {
      if (depth.count(d)) fail(ErrorCode::IllFormed, "derived variable " + d + " is also a loop");
      if (!defined.insert(d).second) fail(ErrorCode::IllFormed, "variable " + d + " defined twice");
    }
    VarResolver resolver(n.loops, n.relations);
    auto known = [&](const std::string& v) { return resolver.slot(v).has_value(); };

    // Depth of a variable: deepest loop it depends on.
    std::map<std::string, std::size_t> vdepth(depth.begin(), depth.end());
    for (const auto& rule : resolver.rules()) {
      std::size_t d = 0;
      for (std::size_t in : rule.inputs) d = std::max(d, vdepth.at(resolver.name(in)));
      vdepth[resolver.name(rule.target)] = d;
    }

    for (const Relation& r : n.relations) {
      std::vector<std::string> vars;
      if (auto* rot = std::get_if<Rotate>(&r)) {
        if (!known(rot->result)) {
          if (single) fail(ErrorCode::IllFormed, "rotate result " + rot->result + " is unbound");
          continue;
        }
        for (const std::string& i : rot->over) {
          if (!known(i)) fail(ErrorCode::IllFormed, "rotate variable " + i + " is unbound");
          if (vdepth.at(i) >= vdepth.at(rot->result)) {
            fail(ErrorCode::IllFormed, "rotate variable " + i + " does not enclose " + rot->result);
          }
        }
        continue;
      }
      if (auto* d = std::get_if<Distribute>(&r)) vars = d->vars;
      if (auto* c = std::get_if<Communicate>(&r)) vars = {c->at};
      if (auto* p = std::get_if<Parallelize>(&r)) vars = {p->var};
      if (auto* f = std::get_if<Fix>(&r)) vars = {f->var};
      if (auto* l = std::get_if<LeafKernel>(&r)) {
        vars = l->vars;
        bool inner = vars.size() <= n.loops.size();
        for (std::size_t k = 0; inner && k < vars.size(); ++k) {
          inner = n.loops[n.loops.size() - vars.size() + k].name == vars[k];
        }
        if (!inner && single) fail(ErrorCode::NotInnermost, to_string(r) + " does not name the innermost loops");
      }
      for (const std::string& v : vars) {
        if (!depth.count(v) && single) {
          fail(ErrorCode::IllFormed, to_string(r) + " names " + v + ", which is not a loop");
        }
      }
    }
    for (const Access& a : leaf_accesses(n.leaf)) {
      for (const IndexVar& v : a.indices) {
        if (!known(v.name)) fail(ErrorCode::IllFormed, "variable " + v.name + " is unbound");
      }
    }
  }
}

// ---- VarResolver ------------------------------------------------------------

VarResolver::VarResolver(const std::vector<IndexVar>& loops, const std::vector<Relation>& relations) {
  for (const IndexVar& v : loops) {
    index_[v.name] = names_.size();
    names_.push_back(v.name);
    extents_.push_back(v.extent);
  }
  std::vector<bool> placed(relations.size(), false);
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t k = 0; k < relations.size(); ++k) {
      if (placed[k]) continue;
      const Relation& r = relations[k];
      std::string target;
      std::vector<std::string> inputs;
      int64_t limit = 0;
      Rule::Kind kind = Rule::Kind::Affine;
      if (auto* d = std::get_if<Divide>(&r)) {
        target = d->parent;
        inputs = {d->outer, d->inner};
        limit = d->parent_extent;
      } else if (auto* s = std::get_if<Split>(&r)) {
        target = s->parent;
        inputs = {s->outer, s->inner};
        limit = s->parent_extent;
      } else if (auto* t = std::get_if<Rotate>(&r)) {
        target = t->target;
        inputs = {t->result};
        inputs.insert(inputs.end(), t->over.begin(), t->over.end());
        limit = t->extent;
        kind = Rule::Kind::Rotate;
      } else {
        placed[k] = true;
        continue;
      }
      if (index_.count(target)) {
        placed[k] = true;
        continue;
      }
      bool ready = std::all_of(inputs.begin(), inputs.end(),
                               [&](const std::string& v) { return index_.count(v) != 0; });
      if (!ready) continue;
      Rule rule{kind, names_.size(), {}, 1, limit};
      for (const std::string& v : inputs) rule.inputs.push_back(index_.at(v));
      if (kind == Rule::Kind::Affine) rule.stride = extents_[rule.inputs[1]];
      index_[target] = names_.size();
      names_.push_back(target);
      extents_.push_back(limit);
      rules_.push_back(std::move(rule));
      placed[k] = true;
      progress = true;
    }
  }
  for (const Relation& r : relations) {
    if (auto* f = std::get_if<Fix>(&r)) {
      if (auto it = index_.find(f->var); it != index_.end()) fixes_.emplace_back(it->second, f->value);
    }
  }
}

std::optional<std::size_t> VarResolver::slot(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t VarResolver::require_slot(const std::string& name) const {
  auto s = slot(name);
  if (!s) fail(ErrorCode::UnboundVariable, "variable " + name + " is not bound by a loop or relation");
  return *s;
}

bool VarResolver::resolve(std::span<int64_t> values) const {
  for (const Rule& r : rules_) {
    if (r.kind == Rule::Kind::Affine) {
      int64_t v = values[r.inputs[0]] * r.stride + values[r.inputs[1]];
      if (v >= r.limit) return false;
      values[r.target] = v;
    } else {
      int64_t v = 0;
      for (std::size_t in : r.inputs) v += values[in];
      values[r.target] = v % r.limit;
    }
  }
  for (const auto& [slot, value] : fixes_) {
    if (values[slot] != value) return false;
  }
  return true;
}

// ---- kernels ------------------------------------------------------------------

namespace {

void lexicographic(std::span<const int64_t> extents,
                   const std::function<void(std::span<const int64_t>)>& visit) {
  for (int64_t e : extents) {
    if (e <= 0) return;
  }
  std::vector<int64_t> p(extents.size(), 0);
  do {
    visit(p);
  } while (next_coord(p, extents));
}

void blocked(std::span<const int64_t> extents,
             const std::function<void(std::span<const int64_t>)>& visit) {
  constexpr int64_t kTile = 2;
  if (extents.size() < 2) return lexicographic(extents, visit);
  for (int64_t e : extents) {
    if (e <= 0) return;
  }
  std::vector<int64_t> p(extents.size(), 0);
  std::span<const int64_t> rest_ext = extents.subspan(2);
  for (int64_t ti = 0; ti < extents[0]; ti += kTile) {
    for (int64_t tj = 0; tj < extents[1]; tj += kTile) {
      for (int64_t i = ti; i < std::min(ti + kTile, extents[0]); ++i) {
        for (int64_t j = tj; j < std::min(tj + kTile, extents[1]); ++j) {
          p[0] = i;
          p[1] = j;
          std::span<int64_t> rest(p.data() + 2, p.size() - 2);
          std::fill(rest.begin(), rest.end(), 0);
          do {
            visit(p);
          } while (next_coord(rest, rest_ext));
        }
      }
    }
  }
}

}  // namespace

const KernelRegistry& KernelRegistry::defaults() {
  static const KernelRegistry registry = [] {
    KernelRegistry r;
    r.add("interp", lexicographic);
    r.add("blocked", blocked);
    return r;
  }();
  return registry;
}

const LeafKernelFn& KernelRegistry::get(const std::string& name) const {
  auto it = kernels_.find(name);
  if (it == kernels_.end()) fail(ErrorCode::UnknownKernel, "no leaf kernel named " + name);
  return it->second;
}

// ---- NestExecutor -------------------------------------------------------------

namespace {
constexpr std::size_t kMaxOrder = 16;
}

NestExecutor::NestExecutor(Nest nest, const KernelRegistry& kernels)
    : nest_(std::move(nest)), resolver_(nest_.loops, nest_.relations) {
  auto info = [&](const Access& a) {
    if (a.indices.size() > kMaxOrder) fail(ErrorCode::ArityMismatch, "tensor order too large");
    AccessInfo ai{a.tensor.name, {}};
    for (const IndexVar& v : a.indices) ai.slots.push_back(resolver_.require_slot(v.name));
    return ai;
  };
  if (nest_.leaf.is<Assign>()) {
    leaf_kind_ = LeafKind::Assign;
    lhs_ = info(nest_.leaf.as<Assign>().lhs);
    rhs_expr_ = nest_.leaf.as<Assign>().rhs;
  } else if (nest_.leaf.is<Reduce>()) {
    leaf_kind_ = LeafKind::Reduce;
    lhs_ = info(nest_.leaf.as<Reduce>().lhs);
    rhs_expr_ = nest_.leaf.as<Reduce>().rhs;
  } else if (nest_.leaf.is<Place>()) {
    leaf_kind_ = LeafKind::Place;
    lhs_ = info(nest_.leaf.as<Place>().target);
  } else {
    fail(ErrorCode::IllFormed, "nest has no leaf statement");
  }
  if (rhs_expr_) {
    for (const Access& a : rhs_expr_->accesses()) rhs_.push_back(info(a));
  }
  kernel_depth_ = nest_.loops.size();
  for (const Relation& r : nest_.relations) {
    auto* leaf = std::get_if<LeafKernel>(&r);
    if (!leaf) continue;
    std::size_t n = leaf->vars.size();
    bool innermost = n <= nest_.loops.size();
    for (std::size_t k = 0; innermost && k < n; ++k) {
      innermost = nest_.loops[nest_.loops.size() - n + k].name == leaf->vars[k];
    }
    if (!innermost) fail(ErrorCode::NotInnermost, to_string(r) + " does not name the innermost loops");
    kernel_depth_ = nest_.loops.size() - n;
    kernel_ = &kernels.get(leaf->kernel);
  }
}

void NestExecutor::execute_point(std::vector<int64_t>& values, const ReadFn& read,
                                 const WriteFn& write) const {
  if (!resolver_.resolve(values)) return;
  if (leaf_kind_ == LeafKind::Place) return;
  int64_t coord[kMaxOrder];
  std::size_t next = 0;
  auto reader = [&](const Access&) {
    std::size_t idx = next++;
    const auto& slots = rhs_[idx].slots;
    for (std::size_t k = 0; k < slots.size(); ++k) coord[k] = values[slots[k]];
    return read(idx, std::span<const int64_t>(coord, slots.size()));
  };
  double v = evaluate_expr(*rhs_expr_, reader);
  for (std::size_t k = 0; k < lhs_.slots.size(); ++k) coord[k] = values[lhs_.slots[k]];
  write(std::span<const int64_t>(coord, lhs_.slots.size()), v, leaf_kind_ == LeafKind::Reduce);
}

void NestExecutor::run(std::vector<int64_t>& values, std::size_t depth, const ReadFn& read,
                       const WriteFn& write, const IterFn& on_iter) const {
  if (values.size() < resolver_.num_slots()) values.resize(resolver_.num_slots(), 0);
  if (depth == kernel_depth_ && kernel_) {
    std::vector<int64_t> extents;
    for (std::size_t k = depth; k < nest_.loops.size(); ++k) extents.push_back(nest_.loops[k].extent);
    (*kernel_)(extents, [&](std::span<const int64_t> p) {
      std::copy(p.begin(), p.end(), values.begin() + static_cast<std::ptrdiff_t>(depth));
      execute_point(values, read, write);
    });
    return;
  }
  if (depth == nest_.loops.size()) {
    execute_point(values, read, write);
    return;
  }
  for (int64_t v = 0; v < nest_.loops[depth].extent; ++v) {
    values[depth] = v;
    if (on_iter) on_iter(depth, values);
    run(values, depth + 1, read, write, on_iter);
  }
}

void interpret(const CinStmt& s, TensorMap& env, const KernelRegistry& kernels) {
  for (Nest& nest : flatten_nests(s)) {
    NestExecutor ex(nest, kernels);
    if (ex.is_place()) continue;
    const Access& lhs = nest.leaf.is<Assign>() ? nest.leaf.as<Assign>().lhs : nest.leaf.as<Reduce>().lhs;
    auto [out_it, created] = env.try_emplace(lhs.tensor.name, DenseTensor(lhs.tensor.dims));
    DenseTensor* out = &out_it->second;
    if (out->dims() != lhs.tensor.dims) fail(ErrorCode::ExtentMismatch, "output " + lhs.tensor.name);
    std::vector<const DenseTensor*> inputs;
    const Expr& rhs = nest.leaf.is<Assign>() ? nest.leaf.as<Assign>().rhs : nest.leaf.as<Reduce>().rhs;
    for (const Access& a : rhs.accesses()) {
      auto it = env.find(a.tensor.name);
      if (it == env.end()) fail(ErrorCode::MissingInput, "no value for " + a.tensor.name);
      if (it->second.dims() != a.tensor.dims) fail(ErrorCode::ExtentMismatch, "input " + a.tensor.name);
      inputs.push_back(&it->second);
    }
    std::vector<int64_t> values(ex.resolver().num_slots(), 0);
    ex.run(
        values, 0, [&](std::size_t idx, std::span<const int64_t> c) { return inputs[idx]->at(c); },
        [&](std::span<const int64_t> c, double v, bool acc) {
          if (acc) {
            out->at(c) += v;
          } else {
            out->at(c) = v;
          }
        });
  }
}

}  // namespace tendist
