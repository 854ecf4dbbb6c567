#include "tendist/scheduling.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "tendist/distribution.hpp"

namespace tendist {

std::string Grid::label(std::size_t k) const {
  if (k < labels.size()) return labels[k];
  return machine_dim_label(k);
}

namespace {

struct Chain {
  std::vector<IndexVar> loops;
  CinStmt leaf;
  std::vector<Relation> rels;

  std::ptrdiff_t position(const std::string& v) const {
    for (std::size_t k = 0; k < loops.size(); ++k) {
      if (loops[k].name == v) return static_cast<std::ptrdiff_t>(k);
    }
    return -1;
  }
  const IndexVar& loop(const std::string& v) const { return loops[static_cast<std::size_t>(position(v))]; }
};

Chain to_chain(const CinStmt& s) {
  auto [body, rels] = strip_relations(s);
  Chain c{{}, body, rels};
  const CinStmt* cur = &body;
  while (cur->is<Forall>()) {
    c.loops.push_back(cur->as<Forall>().var);
    cur = &cur->as<Forall>().body;
  }
  if (cur->is<Seq>() || cur->is<SuchThat>()) {
    fail(ErrorCode::IllFormed, "scheduling requires a perfect loop nest");
  }
  c.leaf = *cur;
  return c;
}

CinStmt from_chain(const Chain& c) {
  CinStmt body = c.leaf;
  for (auto it = c.loops.rbegin(); it != c.loops.rend(); ++it) body = Forall{*it, body};
  return such_that(body, c.rels);
}

std::vector<Access> chain_accesses(const Chain& c) {
  std::vector<Access> out;
  if (c.leaf.is<Assign>()) {
    out.push_back(c.leaf.as<Assign>().lhs);
    auto r = c.leaf.as<Assign>().rhs.accesses();
    out.insert(out.end(), r.begin(), r.end());
  } else if (c.leaf.is<Reduce>()) {
    out.push_back(c.leaf.as<Reduce>().lhs);
    auto r = c.leaf.as<Reduce>().rhs.accesses();
    out.insert(out.end(), r.begin(), r.end());
  } else if (c.leaf.is<Place>()) {
    out.push_back(c.leaf.as<Place>().target);
  }
  return out;
}

void collect_names(const CinStmt& s, std::set<std::string>& names) {
  for (const Nest& n : flatten_nests(s)) {
    for (const IndexVar& v : n.loops) names.insert(v.name);
    for (const std::string& v : derived_variables(n.relations)) names.insert(v);
    for (const Relation& r : n.relations) {
      if (auto* d = std::get_if<Divide>(&r)) names.insert({d->outer, d->inner});
      if (auto* s2 = std::get_if<Split>(&r)) names.insert({s2->outer, s2->inner});
      if (auto* t = std::get_if<Rotate>(&r)) names.insert(t->result);
    }
    Chain c{n.loops, n.leaf, {}};
    for (const Access& a : chain_accesses(c)) {
      for (const IndexVar& v : a.indices) names.insert(v.name);
    }
  }
}

std::set<std::string> loop_names(const CinStmt& s) {
  std::set<std::string> out;
  for (const Nest& n : flatten_nests(s)) {
    for (const IndexVar& v : n.loops) out.insert(v.name);
  }
  return out;
}

void require_fresh(const CinStmt& s, const std::vector<std::string>& fresh) {
  std::set<std::string> used;
  collect_names(s, used);
  std::set<std::string> seen;
  for (const std::string& v : fresh) {
    if (v.empty() || used.count(v) || !seen.insert(v).second) {
      fail(ErrorCode::NonFreshVar, "variable " + v + " is not fresh");
    }
  }
}

// Applies `fn` to the loop nest binding `var` (descending into Seq branches).
CinStmt on_nest(const CinStmt& s, const std::string& var, const std::function<void(Chain&)>& fn) {
  CinStmt c = canonicalize(s);
  auto [body, rels] = strip_relations(c);
  if (body.is<Seq>()) {
    Seq q = body.as<Seq>();
    for (CinStmt& branch : q.stmts) {
      if (loop_names(branch).count(var)) {
        branch = on_nest(branch, var, fn);
        return such_that(q, rels);
      }
    }
    fail(ErrorCode::UnknownVar, "no loop binds " + var);
  }
  Chain chain = to_chain(c);
  if (chain.position(var) < 0) fail(ErrorCode::UnknownVar, "no loop binds " + var);
  fn(chain);
  return from_chain(chain);
}

CinStmt checked(const CinStmt& s) {
  check_well_formed(s);
  return s;
}

CinStmt strip_mine(const CinStmt& s, const std::string& i, const std::string& io,
                   const std::string& ii, int64_t outer_extent, int64_t inner_extent,
                   const Relation& rel) {
  CinStmt out = on_nest(s, i, [&](Chain& c) {
    auto pos = static_cast<std::size_t>(c.position(i));
    c.loops[pos] = IndexVar(ii, inner_extent);
    c.loops.insert(c.loops.begin() + static_cast<std::ptrdiff_t>(pos), IndexVar(io, outer_extent));
    c.rels.push_back(rel);
  });
  return checked(out);
}

int64_t loop_extent(const CinStmt& s, const std::string& i) {
  for (const Nest& n : flatten_nests(s)) {
    for (const IndexVar& v : n.loops) {
      if (v.name == i) return v.extent;
    }
  }
  fail(ErrorCode::UnknownVar, "no loop binds " + i);
}

}  // namespace

CinStmt split(const CinStmt& s, const std::string& i, const std::string& io, const std::string& ii,
              int64_t chunk) {
  int64_t extent = loop_extent(s, i);
  require_fresh(s, {io, ii});
  if (chunk < 1) fail(ErrorCode::IllFormed, "split chunk must be positive");
  return strip_mine(s, i, io, ii, (extent + chunk - 1) / chunk, chunk, Split{i, io, ii, chunk, extent});
}

CinStmt divide(const CinStmt& s, const std::string& i, const std::string& io, const std::string& ii,
               int64_t parts, const std::string& label) {
  int64_t extent = loop_extent(s, i);
  require_fresh(s, {io, ii});
  if (parts < 1) fail(ErrorCode::IllFormed, "divide parts must be positive");
  return strip_mine(s, i, io, ii, parts, (extent + parts - 1) / parts,
                    Divide{i, io, ii, parts, extent, label});
}

CinStmt reorder(const CinStmt& s, const std::vector<std::string>& vars) {
  if (vars.empty()) return s;
  std::set<std::string> distinct(vars.begin(), vars.end());
  if (distinct.size() != vars.size()) fail(ErrorCode::NotPermutation, "reorder repeats a variable");
  auto names = loop_names(s);
  for (const std::string& v : vars) {
    if (!names.count(v)) fail(ErrorCode::UnknownVar, "no loop binds " + v);
  }
  CinStmt out = on_nest(s, vars.front(), [&](Chain& c) {
    std::vector<std::size_t> pos;
    for (const std::string& v : vars) {
      if (c.position(v) < 0) fail(ErrorCode::NotContiguousNest, v + " is in a different loop nest");
      pos.push_back(static_cast<std::size_t>(c.position(v)));
    }
    auto [lo, hi] = std::minmax_element(pos.begin(), pos.end());
    if (*hi - *lo + 1 != vars.size()) {
      fail(ErrorCode::NotContiguousNest, "reordered loops are not a contiguous nest");
    }
    std::vector<IndexVar> moved;
    for (const std::string& v : vars) moved.push_back(c.loop(v));
    std::copy(moved.begin(), moved.end(), c.loops.begin() + static_cast<std::ptrdiff_t>(*lo));
  });
  return checked(out);
}

CinStmt parallelize(const CinStmt& s, const std::string& i) {
  return checked(on_nest(s, i, [&](Chain& c) { c.rels.push_back(Parallelize{i}); }));
}

CinStmt distribute(const CinStmt& s, const std::vector<std::string>& vars) {
  if (vars.empty()) fail(ErrorCode::DimCountMismatch, "distribute names no variable");
  auto names = loop_names(s);
  for (const std::string& v : vars) {
    if (!names.count(v)) fail(ErrorCode::UnknownVar, "no loop binds " + v);
  }
  return checked(on_nest(s, vars.front(), [&](Chain& c) {
    for (const std::string& v : vars) {
      if (c.position(v) < 0) fail(ErrorCode::NotContiguousNest, v + " is in a different loop nest");
    }
    c.rels.push_back(Distribute{vars});
  }));
}

CinStmt distribute(const CinStmt& s, const std::vector<std::string>& targets,
                   const std::vector<std::string>& dist, const std::vector<std::string>& local,
                   const Grid& grid) {
  if (targets.size() != dist.size() || targets.size() != local.size() ||
      targets.size() != grid.dims.size() || targets.empty()) {
    fail(ErrorCode::DimCountMismatch, "distribute needs one dist, local and grid dim per target");
  }
  CinStmt out = s;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    out = divide(out, targets[k], dist[k], local[k], grid.dims[k], grid.label(k));
  }
  out = on_nest(out, dist.front(), [&](Chain& c) {
    std::vector<std::size_t> pos;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      pos.push_back(static_cast<std::size_t>(c.position(dist[k])));
      pos.push_back(static_cast<std::size_t>(c.position(local[k])));
    }
    auto [lo, hi] = std::minmax_element(pos.begin(), pos.end());
    std::vector<IndexVar> order;
    for (const std::string& v : dist) order.push_back(c.loop(v));
    for (const std::string& v : local) order.push_back(c.loop(v));
    for (std::size_t p = *lo; p <= *hi; ++p) {
      const std::string& n = c.loops[p].name;
      if (std::find(dist.begin(), dist.end(), n) == dist.end() &&
          std::find(local.begin(), local.end(), n) == local.end()) {
        order.push_back(c.loops[p]);
      }
    }
    std::copy(order.begin(), order.end(), c.loops.begin() + static_cast<std::ptrdiff_t>(*lo));
    c.rels.push_back(Distribute{dist});
  });
  return checked(out);
}

CinStmt communicate(const CinStmt& s, const std::vector<std::string>& tensors, const std::string& at) {
  if (tensors.empty()) fail(ErrorCode::UnknownTensor, "communicate names no tensor");
  return checked(on_nest(s, at, [&](Chain& c) {
    auto accesses = chain_accesses(c);
    for (const std::string& t : tensors) {
      bool found = std::any_of(accesses.begin(), accesses.end(),
                               [&](const Access& a) { return a.tensor.name == t; });
      if (!found) fail(ErrorCode::UnknownTensor, "tensor " + t + " does not appear in the statement");
    }
    std::vector<Relation> kept;
    for (Relation& r : c.rels) {
      if (auto* comm = std::get_if<Communicate>(&r)) {
        std::erase_if(comm->tensors, [&](const std::string& t) {
          return std::find(tensors.begin(), tensors.end(), t) != tensors.end();
        });
        if (comm->tensors.empty()) continue;
      }
      kept.push_back(r);
    }
    kept.push_back(Communicate{tensors, at});
    c.rels = std::move(kept);
  }));
}

CinStmt rotate(const CinStmt& s, const std::string& t, const std::vector<std::string>& over,
               const std::string& r) {
  require_fresh(s, {r});
  CinStmt out = on_nest(s, t, [&](Chain& c) {
    VarResolver resolver(c.loops, c.rels);
    auto tpos = c.position(t);
    for (const std::string& i : over) {
      auto ipos = c.position(i);
      if (ipos < 0 && !resolver.slot(i)) fail(ErrorCode::UnknownVar, "no loop binds " + i);
      if (ipos < 0) {
        // Derived: every loop it depends on must enclose t.
        for (const auto& rule : resolver.rules()) {
          if (resolver.name(rule.target) != i) continue;
          for (std::size_t in : rule.inputs) {
            if (c.position(resolver.name(in)) >= tpos) {
              fail(ErrorCode::IBelowT, i + " does not enclose " + t);
            }
          }
        }
      } else if (ipos >= tpos) {
        fail(ErrorCode::IBelowT, i + " does not enclose " + t);
      }
    }
    auto pos = static_cast<std::size_t>(tpos);
    int64_t extent = c.loops[pos].extent;
    c.loops[pos] = IndexVar(r, extent);
    for (Relation& rel : c.rels) {
      if (auto* comm = std::get_if<Communicate>(&rel); comm && comm->at == t) comm->at = r;
      if (auto* par = std::get_if<Parallelize>(&rel); par && par->var == t) par->var = r;
    }
    c.rels.push_back(Rotate{t, over, r, extent});
  });
  return checked(out);
}

CinStmt substitute_leaf(const CinStmt& s, const std::vector<std::string>& vars, const std::string& kernel) {
  if (vars.empty()) fail(ErrorCode::NotInnermost, "substitute names no loop");
  return checked(on_nest(s, vars.front(), [&](Chain& c) {
    std::size_t n = vars.size();
    bool ok = n <= c.loops.size();
    for (std::size_t k = 0; ok && k < n; ++k) ok = c.loops[c.loops.size() - n + k].name == vars[k];
    if (!ok) fail(ErrorCode::NotInnermost, "substituted loops must be the innermost nest");
    std::erase_if(c.rels, [](const Relation& r) { return std::holds_alternative<LeafKernel>(r); });
    c.rels.push_back(LeafKernel{vars, kernel});
  }));
}

// ---- Schedule ------------------------------------------------------------------------

namespace {

std::string csv(const std::vector<std::string>& xs) {
  if (xs.empty()) return "-";
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + xs[k];
  return s;
}

std::string spaced(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? " " : "") + xs[k];
  return s;
}

}  // namespace

Schedule& Schedule::split(const std::string& i, const std::string& io, const std::string& ii, int64_t chunk) {
  commands_.push_back({"split " + i + " " + io + " " + ii + " " + std::to_string(chunk),
                       [=](const CinStmt& s) { return tendist::split(s, i, io, ii, chunk); }});
  return *this;
}

Schedule& Schedule::divide(const std::string& i, const std::string& io, const std::string& ii,
                           int64_t parts, const std::string& label) {
  commands_.push_back(
      {"divide " + i + " " + io + " " + ii + " " + std::to_string(parts) + (label.empty() ? "" : " " + label),
       [=](const CinStmt& s) { return tendist::divide(s, i, io, ii, parts, label); }});
  return *this;
}

Schedule& Schedule::reorder(const std::vector<std::string>& vars) {
  commands_.push_back({"reorder " + spaced(vars), [=](const CinStmt& s) { return tendist::reorder(s, vars); }});
  return *this;
}

Schedule& Schedule::parallelize(const std::string& i) {
  commands_.push_back({"parallelize " + i, [=](const CinStmt& s) { return tendist::parallelize(s, i); }});
  return *this;
}

Schedule& Schedule::distribute(const std::vector<std::string>& vars) {
  commands_.push_back(
      {"distribute " + spaced(vars), [=](const CinStmt& s) { return tendist::distribute(s, vars); }});
  return *this;
}

Schedule& Schedule::distribute(const std::vector<std::string>& targets, const std::vector<std::string>& dist,
                               const std::vector<std::string>& local, const Grid& grid) {
  std::string g;
  for (std::size_t k = 0; k < grid.dims.size(); ++k) g += (k ? "x" : "") + std::to_string(grid.dims[k]);
  commands_.push_back({"distribute " + csv(targets) + " " + csv(dist) + " " + csv(local) + " " + g,
                       [=](const CinStmt& s) { return tendist::distribute(s, targets, dist, local, grid); }});
  return *this;
}

Schedule& Schedule::communicate(const std::vector<std::string>& tensors, const std::string& at) {
  commands_.push_back({"communicate " + csv(tensors) + " " + at,
                       [=](const CinStmt& s) { return tendist::communicate(s, tensors, at); }});
  return *this;
}

Schedule& Schedule::rotate(const std::string& t, const std::vector<std::string>& over, const std::string& r) {
  commands_.push_back({"rotate " + t + " " + csv(over) + " " + r,
                       [=](const CinStmt& s) { return tendist::rotate(s, t, over, r); }});
  return *this;
}

Schedule& Schedule::substitute(const std::vector<std::string>& vars, const std::string& kernel) {
  commands_.push_back({"substitute " + csv(vars) + " " + kernel,
                       [=](const CinStmt& s) { return tendist::substitute_leaf(s, vars, kernel); }});
  return *this;
}

CinStmt Schedule::apply(const CinStmt& s) const {
  CinStmt out = s;
  for (const Command& c : commands_) out = c.apply(out);
  return out;
}

std::vector<std::pair<std::string, CinStmt>> Schedule::explain(const CinStmt& s) const {
  std::vector<std::pair<std::string, CinStmt>> out;
  CinStmt cur = s;
  for (const Command& c : commands_) {
    cur = c.apply(cur);
    out.emplace_back(c.text, cur);
  }
  return out;
}

std::string Schedule::to_text() const {
  std::string s;
  for (const Command& c : commands_) s += c.text + "\n";
  return s;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s == "-") return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) fail(ErrorCode::ParseError, "empty name in list '" + s + "'");
    out.push_back(item);
  }
  return out;
}

std::optional<int64_t> parse_int(const std::string& s) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::vector<int64_t>> parse_grid(const std::string& s) {
  std::vector<int64_t> dims;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    auto v = parse_int(item);
    if (!v) return std::nullopt;
    dims.push_back(*v);
  }
  if (dims.empty()) return std::nullopt;
  return dims;
}

}  // namespace

Schedule Schedule::parse(std::string_view text) {
  Schedule sched;
  std::stringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::stringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    auto bad = [&](const std::string& why) {
      fail(ErrorCode::ParseError, "schedule line " + std::to_string(lineno) + ": " + why);
    };
    const std::string& cmd = tok[0];
    auto number = [&](const std::string& s) {
      auto v = parse_int(s);
      if (!v) bad("expected a number, got '" + s + "'");
      return *v;
    };
    if (cmd == "split" || cmd == "divide") {
      if (tok.size() != 5 && !(cmd == "divide" && tok.size() == 6)) bad(cmd + " takes i io ii n");
      if (cmd == "split") {
        sched.split(tok[1], tok[2], tok[3], number(tok[4]));
      } else {
        sched.divide(tok[1], tok[2], tok[3], number(tok[4]), tok.size() == 6 ? tok[5] : "");
      }
    } else if (cmd == "reorder") {
      if (tok.size() < 2) bad("reorder needs variables");
      sched.reorder({tok.begin() + 1, tok.end()});
    } else if (cmd == "parallelize") {
      if (tok.size() != 2) bad("parallelize takes one variable");
      sched.parallelize(tok[1]);
    } else if (cmd == "distribute") {
      if (tok.size() < 2) bad("distribute needs variables");
      auto grid = tok.size() == 5 ? parse_grid(tok[4]) : std::nullopt;
      if (grid) {
        sched.distribute(split_list(tok[1]), split_list(tok[2]), split_list(tok[3]), Grid(*grid));
      } else {
        std::vector<std::string> vars;
        for (std::size_t k = 1; k < tok.size(); ++k) {
          auto part = split_list(tok[k]);
          vars.insert(vars.end(), part.begin(), part.end());
        }
        sched.distribute(vars);
      }
    } else if (cmd == "communicate") {
      if (tok.size() != 3) bad("communicate takes tensors and a variable");
      sched.communicate(split_list(tok[1]), tok[2]);
    } else if (cmd == "rotate") {
      if (tok.size() != 4) bad("rotate takes t I r");
      sched.rotate(tok[1], split_list(tok[2]), tok[3]);
    } else if (cmd == "substitute") {
      if (tok.size() != 3) bad("substitute takes variables and a kernel");
      sched.substitute(split_list(tok[1]), tok[2]);
    } else {
      bad("unknown command '" + cmd + "'");
    }
  }
  return sched;
}

}  // namespace tendist
