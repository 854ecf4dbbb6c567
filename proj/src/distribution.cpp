#include "tendist/distribution.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace tendist {

// ---- text form -----------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

DistLevel parse_level(std::string_view text, std::string_view whole) {
  auto bad = [&](const std::string& why) {
    fail(ErrorCode::ParseError, why + " in distribution '" + std::string(whole) + "'");
  };
  std::size_t arrow = text.find("->");
  if (arrow == std::string_view::npos) bad("missing '->'");
  DistLevel level;
  for (char c : text.substr(0, arrow)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (!std::isalpha(static_cast<unsigned char>(c))) bad("tensor side must be variable names");
    level.x.emplace_back(1, c);
  }
  for (char c : text.substr(arrow + 2)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '*') {
      level.y.push_back(DimName::broadcast());
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      level.y.push_back(DimName::fixed(c - '0'));
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      level.y.push_back(DimName::named(std::string(1, c)));
    } else {
      bad(std::string("unexpected '") + c + "'");
    }
  }
  return level;
}

}  // namespace

DistributionSpec parse_distribution(std::string_view text) {
  std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) {
    fail(ErrorCode::ParseError, "distribution '" + std::string(text) + "' lacks 'Tensor:'");
  }
  DistributionSpec spec;
  spec.tensor = trim(text.substr(0, colon));
  if (spec.tensor.empty()) fail(ErrorCode::ParseError, "distribution names no tensor");
  std::string_view rest = text.substr(colon + 1);
  while (true) {
    std::size_t semi = rest.find(';');
    spec.levels.push_back(parse_level(rest.substr(0, semi), text));
    if (semi == std::string_view::npos) break;
    rest = rest.substr(semi + 1);
  }
  return spec;
}

std::string to_string(const DistributionSpec& spec) {
  std::string s = spec.tensor + ":";
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    if (l) s += " ;";
    s += " ";
    for (const std::string& x : spec.levels[l].x) s += x;
    s += " -> ";
    for (const DimName& y : spec.levels[l].y) {
      if (y.kind == DimName::Kind::Var) s += y.var;
      if (y.kind == DimName::Kind::Fixed) s += std::to_string(y.value);
      if (y.kind == DimName::Kind::Broadcast) s += "*";
    }
  }
  return s;
}

// ---- rectangles -------------------------------------------------------------------

int64_t HyperRect::volume() const {
  int64_t v = 1;
  for (const Interval& i : dims) v *= i.size();
  return v;
}

bool HyperRect::empty() const { return volume() == 0; }

bool HyperRect::contains(std::span<const int64_t> coord) const {
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (!dims[k].contains(coord[k])) return false;
  }
  return true;
}

bool HyperRect::contains(const HyperRect& o) const {
  if (o.empty()) return true;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (o.dims[k].lo < dims[k].lo || o.dims[k].hi > dims[k].hi) return false;
  }
  return true;
}

HyperRect HyperRect::intersect(const HyperRect& o) const {
  HyperRect r;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    int64_t lo = std::max(dims[k].lo, o.dims[k].lo);
    int64_t hi = std::min(dims[k].hi, o.dims[k].hi);
    r.dims.push_back({lo, std::max(lo, hi)});
  }
  return r;
}

std::string HyperRect::to_string() const {
  if (dims.empty()) return "[]";
  std::string s;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) s += "x";
    s += "[" + std::to_string(dims[k].lo) + "," + std::to_string(dims[k].hi) + ")";
  }
  return s;
}

HyperRect full_rect(const std::vector<int64_t>& dims) {
  HyperRect r;
  for (int64_t d : dims) r.dims.push_back({0, d});
  return r;
}

Interval block_range(int64_t extent, int64_t parts, int64_t index) {
  int64_t b = (extent + parts - 1) / parts;
  int64_t lo = std::min(index * b, extent);
  int64_t hi = std::min((index + 1) * b, extent);
  return {lo, hi};
}

// ---- TensorDistribution -------------------------------------------------------------

TensorDistribution::TensorDistribution(TensorVar tensor, Machine machine, std::vector<DistLevel> levels)
    : tensor_(std::move(tensor)), machine_(std::move(machine)), levels_(std::move(levels)) {
  for (std::size_t l = 0; l < levels_.size() && l < machine_.num_levels(); ++l) {
    const DistLevel& level = levels_[l];
    for (std::size_t m = 0; m < level.y.size(); ++m) {
      if (level.y[m].kind != DimName::Kind::Var) continue;
      auto it = std::find(level.x.begin(), level.x.end(), level.y[m].var);
      if (it == level.x.end()) continue;
      parts_.push_back({l, machine_.level_offset(l) + m, static_cast<std::size_t>(it - level.x.begin())});
    }
  }
}

TensorDistribution::TensorDistribution(TensorVar tensor, Machine machine, const DistributionSpec& spec)
    : TensorDistribution(std::move(tensor), std::move(machine), spec.levels) {
  if (spec.tensor != tensor_.name) {
    fail(ErrorCode::UnknownTensor, "distribution for " + spec.tensor + " bound to " + tensor_.name);
  }
}

TensorDistribution TensorDistribution::fresh(TensorVar tensor, Machine machine) {
  std::vector<DistLevel> levels;
  for (std::size_t l = 0; l < machine.num_levels(); ++l) {
    DistLevel level;
    for (std::size_t k = 0; k < tensor.order(); ++k) level.x.emplace_back(1, static_cast<char>('a' + k));
    for (std::size_t m = 0; m < machine.levels()[l].size(); ++m) level.y.push_back(DimName::fixed(0));
    levels.push_back(std::move(level));
  }
  return TensorDistribution(std::move(tensor), std::move(machine), std::move(levels));
}

bool TensorDistribution::replicated() const {
  for (const DistLevel& l : levels_) {
    for (const DimName& y : l.y) {
      if (y.kind == DimName::Kind::Broadcast) return true;
    }
  }
  return false;
}

std::string TensorDistribution::to_string() const {
  return tendist::to_string(DistributionSpec{tensor_.name, levels_});
}

void validate(const TensorDistribution& d) {
  const Machine& m = d.machine();
  const std::string& name = d.tensor().name;
  if (d.levels().size() != m.num_levels()) {
    fail(ErrorCode::RankMismatch, name + ": distribution has " + std::to_string(d.levels().size()) +
                                      " levels but the machine has " + std::to_string(m.num_levels()));
  }
  for (std::size_t l = 0; l < d.levels().size(); ++l) {
    const DistLevel& level = d.levels()[l];
    if (level.x.size() != d.tensor().order()) {
      fail(ErrorCode::RankMismatch, name + ": |X| = " + std::to_string(level.x.size()) +
                                        " but the tensor has order " + std::to_string(d.tensor().order()));
    }
    if (level.y.size() != m.levels()[l].size()) {
      fail(ErrorCode::RankMismatch, name + ": |Y| = " + std::to_string(level.y.size()) +
                                        " but the machine level has " +
                                        std::to_string(m.levels()[l].size()) + " dims");
    }
    std::set<std::string> xs(level.x.begin(), level.x.end());
    if (xs.size() != level.x.size()) fail(ErrorCode::DuplicateName, name + ": repeated name in X");
    std::set<std::string> ys;
    for (const DimName& y : level.y) {
      if (y.kind != DimName::Kind::Var) continue;
      if (!ys.insert(y.var).second) fail(ErrorCode::DuplicateName, name + ": repeated name in Y");
      if (!xs.count(y.var)) fail(ErrorCode::UnboundMachineName, name + ": " + y.var + " is not in X");
    }
  }
}

namespace {

struct Walk {
  std::vector<int64_t> lo, hi, nominal;
};

Walk start_walk(const TensorDistribution& d) {
  Walk w;
  for (int64_t e : d.tensor().dims) {
    w.lo.push_back(0);
    w.hi.push_back(e);
    w.nominal.push_back(e);
  }
  return w;
}

// Narrows dim t to block `index` of `parts` within the current piece.
void narrow(Walk& w, std::size_t t, int64_t parts, int64_t index) {
  int64_t b = (w.nominal[t] + parts - 1) / parts;
  int64_t lo = std::min(w.lo[t] + index * b, w.hi[t]);
  int64_t hi = std::min(w.lo[t] + (index + 1) * b, w.hi[t]);
  w.lo[t] = lo;
  w.hi[t] = hi;
  w.nominal[t] = b;
}

void check_color(const TensorDistribution& d, const Color& c) {
  if (c.size() != d.parts().size()) fail(ErrorCode::OutOfBounds, "color has wrong rank");
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] < 0 || c[k] >= d.machine().dims()[d.parts()[k].machine_dim]) {
      fail(ErrorCode::OutOfBounds, "color component outside machine");
    }
  }
}

}  // namespace

Color color_of(const TensorDistribution& d, std::span<const int64_t> coord) {
  validate(d);
  if (coord.size() != d.tensor().order()) fail(ErrorCode::OutOfBounds, "coordinate rank mismatch");
  for (std::size_t k = 0; k < coord.size(); ++k) {
    if (coord[k] < 0 || coord[k] >= d.tensor().dims[k]) {
      fail(ErrorCode::OutOfBounds, "coordinate outside " + d.tensor().name);
    }
  }
  Walk w = start_walk(d);
  Color c;
  for (const auto& part : d.parts()) {
    int64_t parts = d.machine().dims()[part.machine_dim];
    int64_t b = (w.nominal[part.tensor_dim] + parts - 1) / parts;
    int64_t index = (coord[part.tensor_dim] - w.lo[part.tensor_dim]) / b;
    c.push_back(index);
    narrow(w, part.tensor_dim, parts, index);
  }
  return c;
}

std::vector<ProcCoord> processors_of(const TensorDistribution& d, const Color& c) {
  validate(d);
  check_color(d, c);
  const Machine& m = d.machine();
  // Per machine dim: the admissible values.
  std::vector<std::vector<int64_t>> choices(m.dims().size());
  std::size_t next_part = 0;
  for (std::size_t l = 0; l < d.levels().size(); ++l) {
    const DistLevel& level = d.levels()[l];
    for (std::size_t k = 0; k < level.y.size(); ++k) {
      std::size_t g = m.level_offset(l) + k;
      const DimName& y = level.y[k];
      if (y.kind == DimName::Kind::Var) {
        choices[g] = {c[next_part++]};
      } else if (y.kind == DimName::Kind::Fixed) {
        if (y.value < 0 || y.value >= m.dims()[g]) {
          fail(ErrorCode::FixedOutOfRange, d.tensor().name + ": fixed coordinate " +
                                               std::to_string(y.value) + " exceeds machine dim " +
                                               std::to_string(m.dims()[g]));
        }
        choices[g] = {y.value};
      } else {
        for (int64_t v = 0; v < m.dims()[g]; ++v) choices[g].push_back(v);
      }
    }
  }
  std::vector<ProcCoord> out;
  std::vector<int64_t> pick(choices.size(), 0);
  std::vector<int64_t> sizes;
  for (const auto& ch : choices) sizes.push_back(static_cast<int64_t>(ch.size()));
  do {
    ProcCoord p(choices.size());
    for (std::size_t g = 0; g < choices.size(); ++g) p[g] = choices[g][pick[g]];
    out.push_back(std::move(p));
  } while (next_coord(pick, sizes));
  return out;
}

HyperRect piece_bounds(const TensorDistribution& d, const Color& c) {
  validate(d);
  check_color(d, c);
  Walk w = start_walk(d);
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto& part = d.parts()[k];
    narrow(w, part.tensor_dim, d.machine().dims()[part.machine_dim], c[k]);
  }
  HyperRect r;
  for (std::size_t t = 0; t < w.lo.size(); ++t) r.dims.push_back({w.lo[t], w.hi[t]});
  return r;
}

std::vector<Color> colors(const TensorDistribution& d) {
  validate(d);
  std::vector<int64_t> sizes;
  for (const auto& part : d.parts()) sizes.push_back(d.machine().dims()[part.machine_dim]);
  std::vector<Color> out;
  Color c(sizes.size(), 0);
  do {
    out.push_back(c);
  } while (next_coord(c, sizes));
  return out;
}

std::optional<Color> color_on(const TensorDistribution& d, const ProcCoord& p) {
  validate(d);
  const Machine& m = d.machine();
  Color c;
  for (std::size_t l = 0; l < d.levels().size(); ++l) {
    const DistLevel& level = d.levels()[l];
    for (std::size_t k = 0; k < level.y.size(); ++k) {
      std::size_t g = m.level_offset(l) + k;
      const DimName& y = level.y[k];
      if (y.kind == DimName::Kind::Var) c.push_back(p[g]);
      if (y.kind == DimName::Kind::Fixed && p[g] != y.value) return std::nullopt;
    }
  }
  return c;
}

ProcCoord home_of(const TensorDistribution& d, const Color& c) { return processors_of(d, c).front(); }

std::string machine_dim_label(std::size_t dim) {
  if (dim < 3) return std::string("g") + "xyz"[dim];
  return "g" + std::to_string(dim);
}

CinStmt lower_placement(const TensorDistribution& d) {
  validate(d);
  const Machine& m = d.machine();
  const TensorVar& t = d.tensor();
  const std::vector<std::string>& names = d.levels().front().x;

  // Step 1: a loop per tensor dimension plus one per unpartitioned machine dimension.
  std::vector<IndexVar> tensor_loops;
  for (std::size_t k = 0; k < t.order(); ++k) tensor_loops.emplace_back(names[k], t.dims[k]);

  std::vector<Relation> rels;
  std::vector<IndexVar> current = tensor_loops;  // loop var currently standing for each tensor dim
  std::vector<int64_t> nominal = t.dims;
  std::vector<IndexVar> dist_vars;   // outermost, in Y order across levels
  std::vector<bool> placed_first(t.order(), false);

  for (std::size_t l = 0; l < d.levels().size(); ++l) {
    const DistLevel& level = d.levels()[l];
    for (std::size_t k = 0; k < level.y.size(); ++k) {
      std::size_t g = m.level_offset(l) + k;
      const DimName& y = level.y[k];
      int64_t extent = m.dims()[g];
      if (y.kind == DimName::Kind::Var) {
        // Step 3: divide the X variable by the machine dimension.
        std::size_t td =
            static_cast<std::size_t>(std::find(level.x.begin(), level.x.end(), y.var) - level.x.begin());
        const IndexVar parent = current[td];
        int64_t inner = (nominal[td] + extent - 1) / extent;
        IndexVar outer_var(parent.name + "o", extent), inner_var(parent.name + "i", inner);
        rels.push_back(Divide{parent.name, outer_var.name, inner_var.name, extent, nominal[td],
                              machine_dim_label(g)});
        dist_vars.push_back(outer_var);
        current[td] = inner_var;
        nominal[td] = inner;
        if (l == 0) placed_first[td] = true;
      } else {
        std::string prefix = y.kind == DimName::Kind::Fixed ? "f" : "b";
        IndexVar v(prefix + std::to_string(g), extent);
        if (y.kind == DimName::Kind::Fixed) rels.push_back(Fix{v.name, y.value});
        dist_vars.push_back(v);
      }
    }
  }

  // Steps 2 and 4: distributed variables outermost (Y order), then the local
  // remainder of Y-partitioned dimensions, then the other tensor dimensions.
  std::vector<IndexVar> order = dist_vars;
  for (std::size_t td = 0; td < t.order(); ++td) {
    if (placed_first[td]) order.push_back(current[td]);
  }
  for (std::size_t td = 0; td < t.order(); ++td) {
    if (!placed_first[td]) order.push_back(current[td]);
  }

  CinStmt body = Place{make_access(t, tensor_loops)};
  for (auto it = order.rbegin(); it != order.rend(); ++it) body = Forall{*it, body};

  // Step 5: distribute and communicate the tensor at the innermost distributed loop.
  std::vector<std::string> dnames;
  for (const IndexVar& v : dist_vars) dnames.push_back(v.name);
  std::vector<Relation> all;
  for (const Relation& r : rels) {
    if (std::holds_alternative<Divide>(r)) all.push_back(r);
  }
  all.push_back(Distribute{dnames});
  all.push_back(Communicate{{t.name}, dnames.back()});
  for (const Relation& r : rels) {
    if (std::holds_alternative<Fix>(r)) all.push_back(r);
  }
  return such_that(body, std::move(all));
}

}  // namespace tendist
