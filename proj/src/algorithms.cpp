#include "tendist/algorithms.hpp"

#include <algorithm>
#include <set>

namespace tendist {

namespace {

void require_positive(std::initializer_list<int64_t> xs) {
  for (int64_t x : xs) {
    if (x < 1) fail(ErrorCode::BadGrid, "grid dimensions and chunk sizes must be positive");
  }
}

Machine grid(std::vector<int64_t> dims) { return Machine({std::move(dims)}); }

std::vector<const CommEvent*> events_of(const ExecutionTrace& t, const std::string& tensor, EventKind kind) {
  std::vector<const CommEvent*> out;
  for (const CommEvent& e : t.events) {
    if (e.phase == Phase::Compute && e.tensor == tensor && e.kind == kind) out.push_back(&e);
  }
  return out;
}

int64_t compute_events(const ExecutionTrace& t) {
  return std::count_if(t.events.begin(), t.events.end(), [](const CommEvent& e) { return e.phase == Phase::Compute; });
}

// Every source sends the same rect to exactly `degree` processors per step.
std::optional<std::string> broadcast_degree(const ExecutionTrace& t, const std::string& tensor, int64_t degree) {
  std::map<std::pair<int64_t, ProcCoord>, std::vector<const CommEvent*>> by_src;
  for (const CommEvent* e : events_of(t, tensor, EventKind::Copy)) by_src[{e->timestep, e->src}].push_back(e);
  for (const auto& [key, evs] : by_src) {
    std::set<HyperRect, bool (*)(const HyperRect&, const HyperRect&)> rects(
        [](const HyperRect& a, const HyperRect& b) { return a.to_string() < b.to_string(); });
    std::set<ProcCoord> dsts;
    for (const CommEvent* e : evs) {
      rects.insert(e->rect);
      dsts.insert(e->dst);
    }
    if (static_cast<int64_t>(dsts.size()) != degree) {
      return tensor + " source " + format_coord(key.second) + " reaches " + std::to_string(dsts.size()) +
             " processors at step " + std::to_string(key.first) + ", expected " + std::to_string(degree);
    }
    if (rects.size() != 1) return tensor + " broadcast from " + format_coord(key.second) + " sends differing data";
  }
  return std::nullopt;
}

// After step 0 every event of `tensor` comes from the neighbor at +1 along `dim`
// and no source sends more than once per step.
std::optional<std::string> systolic(const ExecutionTrace& t, const std::string& tensor, std::size_t dim, int64_t g) {
  std::set<std::pair<int64_t, ProcCoord>> senders, receivers;
  for (const CommEvent* e : events_of(t, tensor, EventKind::Copy)) {
    if (e->timestep == 0) continue;
    ProcCoord want = e->dst;
    want[dim] = (want[dim] + 1) % g;
    if (e->src != want) return tensor + " event is not from the neighbor: " + to_string(*e);
    if (!senders.insert({e->timestep, e->src}).second) return tensor + " source sends twice: " + to_string(*e);
    if (!receivers.insert({e->timestep, e->dst}).second) return tensor + " receiver gets twice: " + to_string(*e);
  }
  return std::nullopt;
}

// Each output tile receives `fan_in` reduce events and all land on processors with coordinate 0 in `dim`.
std::optional<std::string> reduce_fan_in(const ExecutionTrace& t, const std::string& tensor, int64_t fan_in,
                                         std::size_t dim) {
  std::map<std::pair<ProcCoord, std::string>, int64_t> per_tile;
  for (const CommEvent* e : events_of(t, tensor, EventKind::Reduce)) {
    if (e->dst[dim] != 0) return tensor + " reduces to " + format_coord(e->dst);
    per_tile[{e->dst, e->rect.to_string()}] += 1;
  }
  for (const auto& [tile, n] : per_tile) {
    if (n != fan_in) {
      return tensor + " tile " + tile.second + " has fan-in " + std::to_string(n) + ", expected " +
             std::to_string(fan_in);
    }
  }
  return std::nullopt;
}

std::optional<std::string> first_of(std::initializer_list<std::optional<std::string>> checks) {
  for (const auto& c : checks) {
    if (c) return c;
  }
  return std::nullopt;
}

std::optional<std::string> no_compute_comm(const ExecutionTrace& t) {
  int64_t n = compute_events(t);
  if (n) return std::to_string(n) + " compute-phase events, expected none";
  return std::nullopt;
}

std::map<std::string, std::string> tiled(std::initializer_list<std::string> tensors, const std::string& d) {
  std::map<std::string, std::string> out;
  for (const std::string& t : tensors) out[t] = d;
  return out;
}

}  // namespace

AlgorithmBundle summa(int64_t gx, int64_t gy, int64_t chunk) {
  require_positive({gx, gy, chunk});
  AlgorithmBundle b{"summa", "gemm", grid({gx, gy}), tiled({"A", "B", "C"}, "xy -> xy"), {}, {}};
  b.schedule.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{gx, gy})
      .split("k", "ko", "ki", chunk)
      .reorder({"ko", "ii", "ji", "ki"})
      .communicate({"A"}, "jo")
      .communicate({"B", "C"}, "ko");
  b.signature = [gx, gy](const ExecutionTrace& t) {
    return first_of({broadcast_degree(t, "B", gy - 1), broadcast_degree(t, "C", gx - 1),
                     events_of(t, "A", EventKind::Copy).empty() ? std::nullopt
                                                                : std::optional<std::string>("A moved")});
  };
  return b;
}

AlgorithmBundle cannon(int64_t gx, int64_t gy) {
  require_positive({gx, gy});
  if (gx != gy) fail(ErrorCode::NonSquareGrid, "cannon needs a square grid");
  int64_t g = gx;
  AlgorithmBundle b{"cannon", "gemm", grid({g, g}), tiled({"A", "B", "C"}, "xy -> xy"), {}, {}};
  b.schedule.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{g, g})
      .divide("k", "ko", "ki", g, "gx")
      .reorder({"ko", "ii", "ji", "ki"})
      .rotate("ko", {"io", "jo"}, "kos")
      .communicate({"A"}, "jo")
      .communicate({"B", "C"}, "kos");
  b.signature = [g](const ExecutionTrace& t) { return first_of({systolic(t, "B", 1, g), systolic(t, "C", 0, g)}); };
  return b;
}

AlgorithmBundle pumma(int64_t gx, int64_t gy, int64_t chunk, bool rotate_b) {
  require_positive({gx, gy, chunk});
  if (gx != gy) fail(ErrorCode::NonSquareGrid, "pumma rotates over a square grid");
  AlgorithmBundle b{"pumma", "gemm", grid({gx, gy}), tiled({"A", "B", "C"}, "xy -> xy"), {}, {}};
  b.schedule.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{gx, gy})
      .split("k", "ko", "ki", chunk)
      .reorder({"ko", "ii", "ji", "ki"})
      .rotate("ko", {rotate_b ? "jo" : "io"}, "kos")
      .communicate({"A"}, "jo")
      .communicate({"B", "C"}, "kos");
  b.signature = [gx, gy, rotate_b](const ExecutionTrace& t) {
    if (rotate_b) return first_of({broadcast_degree(t, "C", gx - 1), systolic(t, "B", 1, gy)});
    return first_of({broadcast_degree(t, "B", gy - 1), systolic(t, "C", 0, gx)});
  };
  return b;
}

AlgorithmBundle johnson(int64_t gx, int64_t gy, int64_t gz) {
  require_positive({gx, gy, gz});
  if (gx != gy || gy != gz) fail(ErrorCode::NonCubeGrid, "johnson needs a cube grid");
  int64_t g = gx;
  AlgorithmBundle b{"johnson", "gemm", grid({g, g, g}),
                    {{"A", "xy -> xy0"}, {"B", "xz -> x0z"}, {"C", "zy -> 0yz"}}, {}, {}};
  b.schedule.distribute({"i", "j", "k"}, {"io", "jo", "ko"}, {"ii", "ji", "ki"}, Grid{g, g, g})
      .communicate({"A", "B", "C"}, "ko");
  b.signature = [g](const ExecutionTrace& t) { return reduce_fan_in(t, "A", g - 1, 2); };
  return b;
}

AlgorithmBundle solomonik(int64_t gx, int64_t gy, int64_t gz, int64_t chunks) {
  require_positive({gx, gy, gz, chunks});
  if (gx != gy || (gx * gy) % gz != 0) {
    fail(ErrorCode::BadGrid, "2.5D needs a square base whose size is a multiple of the replication depth");
  }
  AlgorithmBundle b{"solomonik", "gemm", grid({gx, gy, gz}), tiled({"A", "B", "C"}, "xy -> xy0"), {}, {}};
  b.schedule.distribute({"i", "j", "k"}, {"io", "jo", "ko"}, {"ii", "ji", "ki"}, Grid{gx, gy, gz})
      .divide("ki", "kio", "kii", chunks)
      .reorder({"kio", "ii", "ji", "kii"})
      .rotate("kio", {"io", "jo"}, "kios")
      .communicate({"A"}, "ko")
      .communicate({"B", "C"}, "kios");
  b.signature = [gz](const ExecutionTrace& t) { return reduce_fan_in(t, "A", gz - 1, 2); };
  return b;
}

AlgorithmBundle cosma_like(const CosmaFactors& f) {
  require_positive({f.par_i, f.par_j, f.par_k, f.seq_i, f.seq_j, f.seq_k});
  struct Dim {
    std::string name;
    int64_t par, seq;
  };
  std::vector<Dim> dims{{"i", f.par_i, f.seq_i}, {"j", f.par_j, f.seq_j}, {"k", f.par_k, f.seq_k}};
  std::vector<int64_t> machine;
  std::vector<std::string> seq, dist, local;
  AlgorithmBundle b{"cosma", "gemm", Machine(), {}, {}, {}};
  for (const Dim& d : dims) {
    std::string cur = d.name;
    if (d.seq > 1) {
      b.schedule.divide(cur, d.name + "s", d.name + "r", d.seq);
      seq.push_back(d.name + "s");
      cur = d.name + "r";
    }
    if (d.par > 1) {
      b.schedule.divide(cur, d.name + "o", d.name + "i", d.par);
      dist.push_back(d.name + "o");
      machine.push_back(d.par);
      cur = d.name + "i";
    }
    local.push_back(cur);
  }
  std::vector<std::string> order = seq;
  order.insert(order.end(), dist.begin(), dist.end());
  order.insert(order.end(), local.begin(), local.end());
  b.schedule.reorder(order);
  if (!dist.empty()) {
    b.schedule.distribute(dist);
    b.schedule.communicate({"A", "B", "C"}, dist.back());
  } else {
    b.schedule.communicate({"A", "B", "C"}, local.front());
  }
  if (machine.empty()) machine.push_back(1);
  b.machine = grid(machine);
  std::string d = machine.size() == 1 ? "xy -> x" : machine.size() == 2 ? "xy -> xy" : "xy -> xy0";
  b.distributions = tiled({"A", "B", "C"}, d);
  b.signature = [](const ExecutionTrace&) { return std::optional<std::string>(); };
  return b;
}

AlgorithmBundle summa_hier(int64_t gx, int64_t gy, int64_t gz, int64_t chunk) {
  require_positive({gx, gy, gz, chunk});
  AlgorithmBundle b{"summa_hier", "gemm", Machine({{gx, gy}, {gz}}), tiled({"A", "B", "C"}, "xy -> xy ; zw -> z"),
                    {}, {}};
  b.schedule.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{gx, gy})
      .distribute({"ii"}, {"iio"}, {"iii"}, Grid({gz}, {"gz"}))
      .split("k", "ko", "ki", chunk)
      .reorder({"ko", "iii", "ji", "ki"})
      .communicate({"A"}, "iio")
      .communicate({"B", "C"}, "ko")
      .substitute({"iii", "ji", "ki"}, "blocked");
  b.signature = [](const ExecutionTrace& t) {
    if (!events_of(t, "A", EventKind::Copy).empty()) return std::optional<std::string>("A moved");
    return std::optional<std::string>();
  };
  return b;
}

AlgorithmBundle ttv(int64_t p) {
  require_positive({p});
  AlgorithmBundle b{"ttv", "ttv", grid({p}), {{"A", "xy -> x"}, {"B", "xyz -> x"}, {"c", "x -> *"}}, {}, {}};
  b.schedule.distribute({"i"}, {"io"}, {"ii"}, Grid{p}).communicate({"A", "B", "c"}, "io");
  b.signature = no_compute_comm;
  return b;
}

AlgorithmBundle ttm(int64_t p) {
  require_positive({p});
  AlgorithmBundle b{"ttm", "ttm", grid({p}), {{"A", "xyz -> x"}, {"B", "xyz -> x"}, {"C", "xy -> *"}}, {}, {}};
  b.schedule.distribute({"i"}, {"io"}, {"ii"}, Grid{p}).communicate({"A", "B", "C"}, "io");
  b.signature = [p](const ExecutionTrace& t) -> std::optional<std::string> {
    if (auto bad = no_compute_comm(t)) return bad;
    std::set<ProcCoord> reached;
    for (const CommEvent& e : t.events) {
      if (e.phase == Phase::Placement && e.tensor == "C") reached.insert(e.dst);
    }
    if (static_cast<int64_t>(reached.size()) != p - 1) return std::string("C is not replicated at placement");
    return std::nullopt;
  };
  return b;
}

AlgorithmBundle innerprod(int64_t p) {
  require_positive({p});
  AlgorithmBundle b{"innerprod", "innerprod", grid({p}), {{"a", " -> 0"}, {"B", "xyz -> x"}, {"C", "xyz -> x"}}, {}, {}};
  b.schedule.distribute({"i"}, {"io"}, {"ii"}, Grid{p}).communicate({"a", "B", "C"}, "io");
  b.signature = [p](const ExecutionTrace& t) -> std::optional<std::string> {
    auto reduces = events_of(t, "a", EventKind::Reduce);
    if (static_cast<int64_t>(reduces.size()) != p - 1) {
      return std::to_string(reduces.size()) + " reduce events, expected " + std::to_string(p - 1);
    }
    for (const CommEvent* e : reduces) {
      if (e->dst != ProcCoord{0}) return "reduction lands on " + format_coord(e->dst);
    }
    if (compute_events(t) != p - 1) return std::string("unexpected copies during compute");
    return std::nullopt;
  };
  return b;
}

AlgorithmBundle mttkrp(int64_t gx, int64_t gy) {
  require_positive({gx, gy});
  AlgorithmBundle b{"mttkrp", "mttkrp", grid({gx, gy}),
                    {{"A", "xy -> x0"}, {"B", "xyz -> xy"}, {"C", "xy -> 0x"}, {"D", "xy -> 00"}}, {}, {}};
  b.schedule.distribute({"i", "j"}, {"io", "jo"}, {"ii", "ji"}, Grid{gx, gy})
      .communicate({"A"}, "jo")
      .communicate({"B", "C", "D"}, "io");
  b.signature = [gy](const ExecutionTrace& t) -> std::optional<std::string> {
    if (!events_of(t, "B", EventKind::Copy).empty()) return std::string("B moved");
    if (auto bad = reduce_fan_in(t, "A", gy - 1, 1)) return bad;
    return std::nullopt;
  };
  return b;
}

std::vector<std::string> algorithm_names() {
  return {"summa", "cannon", "pumma", "johnson", "solomonik", "cosma", "summa_hier", "ttv", "ttm", "innerprod", "mttkrp"};
}

AlgorithmBundle make_algorithm(const std::string& name, const Machine& m, const AlgorithmParams& p) {
  const auto& lv = m.levels();
  auto flat2 = [&](ErrorCode code) {
    if (lv.size() != 1 || lv[0].size() != 2) fail(code, name + " needs a two-dimensional machine, got " + m.to_string());
    return std::pair{lv[0][0], lv[0][1]};
  };
  auto flat1 = [&] {
    if (lv.size() != 1 || lv[0].size() != 1) {
      fail(ErrorCode::GridMismatch, name + " needs a one-dimensional machine, got " + m.to_string());
    }
    return lv[0][0];
  };
  if (name == "summa") {
    auto [gx, gy] = flat2(ErrorCode::GridMismatch);
    return summa(gx, gy, p.chunk);
  }
  if (name == "cannon") {
    auto [gx, gy] = flat2(ErrorCode::NonSquareGrid);
    return cannon(gx, gy);
  }
  if (name == "pumma") {
    auto [gx, gy] = flat2(ErrorCode::NonSquareGrid);
    return pumma(gx, gy, p.chunk, p.rotate_b);
  }
  if (name == "johnson" || name == "solomonik") {
    ErrorCode code = name == "johnson" ? ErrorCode::NonCubeGrid : ErrorCode::BadGrid;
    if (lv.size() != 1 || lv[0].size() != 3) fail(code, name + " needs a three-dimensional machine, got " + m.to_string());
    if (name == "johnson") return johnson(lv[0][0], lv[0][1], lv[0][2]);
    return solomonik(lv[0][0], lv[0][1], lv[0][2], p.chunk);
  }
  if (name == "cosma") {
    const CosmaFactors& f = p.cosma;
    if (f.par_i * f.par_j * f.par_k != m.size()) {
      fail(ErrorCode::FactorMismatch, "parallel factors multiply to " + std::to_string(f.par_i * f.par_j * f.par_k) +
                                          " but the machine has " + std::to_string(m.size()) + " processors");
    }
    AlgorithmBundle b = cosma_like(f);
    if (!(b.machine == m)) {
      fail(ErrorCode::FactorMismatch, "parallel factors describe machine " + b.machine.to_string() + ", not " +
                                          m.to_string());
    }
    return b;
  }
  if (name == "summa_hier") {
    if (lv.size() != 2 || lv[0].size() != 2 || lv[1].size() != 1) {
      fail(ErrorCode::GridMismatch, "summa_hier needs a machine gx x gy / gz, got " + m.to_string());
    }
    return summa_hier(lv[0][0], lv[0][1], lv[1][0], p.chunk);
  }
  if (name == "ttv") return ttv(flat1());
  if (name == "ttm") return ttm(flat1());
  if (name == "innerprod") return innerprod(flat1());
  if (name == "mttkrp") {
    auto [gx, gy] = flat2(ErrorCode::GridMismatch);
    return mttkrp(gx, gy);
  }
  fail(ErrorCode::ConfigError, "unknown algorithm '" + name + "'");
}

Instance instantiate(const AlgorithmBundle& b, const Extents& extents) {
  Instance in{make_kernel(b.kernel, extents), {}, lower_to_cin(make_kernel(b.kernel, extents))};
  for (const TensorVar& t : in.stmt.tensors()) {
    auto it = b.distributions.find(t.name);
    if (it == b.distributions.end()) fail(ErrorCode::MissingDistribution, "bundle has no distribution for " + t.name);
    TensorDistribution d(t, b.machine, parse_distribution(t.name + ": " + it->second));
    validate(d);
    in.distributions.emplace(t.name, std::move(d));
  }
  in.compute = b.schedule.apply(in.compute);
  return in;
}

}  // namespace tendist
