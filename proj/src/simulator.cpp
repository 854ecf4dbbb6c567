#include "tendist/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <memory>
#include <set>
#include <thread>

namespace tendist {

const char* to_string(Phase p) { return p == Phase::Placement ? "placement" : "compute"; }
const char* to_string(EventKind k) { return k == EventKind::Copy ? "copy" : "reduce"; }
const char* to_string(Privilege p) {
  switch (p) {
    case Privilege::Read:
      return "read";
    case Privilege::Write:
      return "write";
    case Privilege::ReduceSum:
      return "reduce-sum";
  }
  return "?";
}

std::string to_string(const CommEvent& e) {
  return std::string(to_string(e.phase)) + " step=" + std::to_string(e.timestep) + " " + to_string(e.kind) +
         " " + e.tensor + " " + format_coord(e.src) + "->" + format_coord(e.dst) + " " + e.rect.to_string() +
         " elements=" + std::to_string(e.elements) + " level=" + std::to_string(e.level);
}

namespace {

constexpr std::size_t kTaskScope = std::numeric_limits<std::size_t>::max();

void for_each_coord(const HyperRect& r, const std::function<void(std::span<const int64_t>)>& fn) {
  if (r.empty()) return;
  std::vector<int64_t> c(r.dims.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = r.dims[k].lo;
  while (true) {
    fn(c);
    std::size_t k = c.size();
    while (k > 0) {
      --k;
      if (++c[k] < r.dims[k].hi) break;
      c[k] = r.dims[k].lo;
      if (k == 0) return;
    }
    if (c.empty()) return;
  }
}

HyperRect bounding_union(const HyperRect& a, const HyperRect& b) {
  HyperRect r = a;
  for (std::size_t k = 0; k < r.dims.size(); ++k) {
    r.dims[k].lo = std::min(a.dims[k].lo, b.dims[k].lo);
    r.dims[k].hi = std::max(a.dims[k].hi, b.dims[k].hi);
  }
  return r;
}

// Value ranges of every resolver slot with loops [0, fixed) pinned to `values`.
bool slot_intervals(const VarResolver& r, std::size_t loops, std::span<const int64_t> values, std::size_t fixed,
                    std::vector<Interval>& iv) {
  iv.assign(r.num_slots(), {});
  for (std::size_t k = 0; k < loops; ++k) {
    iv[k] = k < fixed ? Interval{values[k], values[k] + 1} : Interval{0, r.extent(k)};
  }
  for (const auto& rule : r.rules()) {
    Interval& t = iv[rule.target];
    if (rule.kind == VarResolver::Rule::Kind::Affine) {
      const Interval& o = iv[rule.inputs[0]];
      const Interval& i = iv[rule.inputs[1]];
      if (o.empty() || i.empty()) return false;
      int64_t lo = o.lo * rule.stride + i.lo;
      int64_t hi = std::min((o.hi - 1) * rule.stride + i.hi, rule.limit);
      t = {lo, std::max(lo, hi)};
    } else {
      int64_t lo = 0, last = 0;
      for (std::size_t in : rule.inputs) {
        if (iv[in].empty()) return false;
        lo += iv[in].lo;
        last += iv[in].hi - 1;
      }
      int64_t span = last - lo + 1;
      int64_t start = lo % rule.limit;
      if (span >= rule.limit || start + span > rule.limit) {
        t = {0, rule.limit};
      } else {
        t = {start, start + span};
      }
    }
    if (t.empty()) return false;
  }
  for (const auto& [slot, value] : r.fixes()) {
    Interval& t = iv[slot];
    t = {std::max(t.lo, value), std::min(t.hi, value + 1)};
    if (t.empty()) return false;
  }
  for (const Interval& i : iv) {
    if (i.empty()) return false;
  }
  return true;
}

std::optional<HyperRect> rect_of(const std::vector<std::vector<std::size_t>>& accesses,
                                 const std::vector<Interval>& iv) {
  std::optional<HyperRect> box;
  for (const auto& slots : accesses) {
    HyperRect r;
    for (std::size_t s : slots) r.dims.push_back(iv[s]);
    box = box ? bounding_union(*box, r) : r;
  }
  return box;
}

// Where each piece of a tensor lives.
struct Layout {
  std::vector<HyperRect> pieces;
  std::vector<std::vector<std::size_t>> holders;  // enumerate indices, ascending
  std::vector<std::vector<std::size_t>> held;     // per processor: piece indices

  bool holds(std::size_t proc, std::size_t piece) const {
    return std::binary_search(holders[piece].begin(), holders[piece].end(), proc);
  }
  int64_t resident_volume(std::size_t proc) const {
    int64_t v = 0;
    for (std::size_t k : held[proc]) v += pieces[k].volume();
    return v;
  }
};

Layout make_layout(const TensorDistribution& d) {
  validate(d);
  const Machine& m = d.machine();
  Layout l;
  l.held.resize(static_cast<std::size_t>(m.size()));
  for (const Color& c : colors(d)) {
    HyperRect piece = piece_bounds(d, c);
    if (piece.empty()) continue;
    std::vector<std::size_t> hs;
    for (const ProcCoord& p : processors_of(d, c)) hs.push_back(static_cast<std::size_t>(m.index_of(p)));
    std::sort(hs.begin(), hs.end());
    for (std::size_t h : hs) l.held[h].push_back(l.pieces.size());
    l.pieces.push_back(piece);
    l.holders.push_back(std::move(hs));
  }
  return l;
}

struct Use {
  std::string tensor;
  std::vector<std::vector<std::size_t>> accesses;  // resolver slots per access
  std::size_t scope = kTaskScope;                  // absolute loop depth
};

// A nest prepared for launch: loop partition, region uses and time structure.
struct NestPlan {
  std::unique_ptr<NestExecutor> ex;
  std::size_t loops = 0, outer = 0, group = 0, base = 0;
  std::vector<Use> inputs;
  std::vector<std::size_t> access_use;  // rhs access -> input index
  bool place = false;
  std::string output;
  Privilege out_priv = Privilege::Write;
  std::size_t step_depth = kTaskScope;
  int64_t steps = 1;

  const VarResolver& resolver() const { return ex->resolver(); }
  const std::vector<IndexVar>& loop_vars() const { return ex->nest().loops; }
};

NestPlan make_plan(const Nest& nest, const Machine& m, const KernelRegistry& kernels) {
  NestPlan p;
  p.ex = std::make_unique<NestExecutor>(nest, kernels);
  const auto& loops = nest.loops;
  p.loops = loops.size();

  std::set<std::string> distributed;
  for (const Relation& r : nest.relations) {
    if (auto* d = std::get_if<Distribute>(&r)) distributed.insert(d->vars.begin(), d->vars.end());
  }
  std::size_t first = p.loops;
  for (std::size_t k = 0; k < p.loops; ++k) {
    if (distributed.count(loops[k].name)) {
      first = k;
      break;
    }
  }
  if (first < p.loops) {
    std::size_t end = first;
    while (end < p.loops && distributed.count(loops[end].name)) ++end;
    for (std::size_t k = end; k < p.loops; ++k) {
      if (distributed.count(loops[k].name)) {
        fail(ErrorCode::IllFormed, "distributed loop " + loops[k].name + " is not directly nested");
      }
    }
    p.outer = first;
    p.group = end - first;
    std::vector<int64_t> dom;
    for (std::size_t k = first; k < end; ++k) dom.push_back(loops[k].extent);
    if (dom != m.dims()) {
      std::string got;
      for (std::size_t k = 0; k < dom.size(); ++k) got += (k ? "x" : "") + std::to_string(dom[k]);
      fail(ErrorCode::GridMismatch, "launch domain " + got + " does not match machine " + m.to_string());
    }
  }
  p.base = p.outer + p.group;

  auto loop_pos = [&](const std::string& v) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < p.loops; ++k) {
      if (loops[k].name == v) return k;
    }
    return std::nullopt;
  };
  auto scope_of = [&](const std::string& tensor) {
    std::optional<std::string> at;
    for (const Relation& r : nest.relations) {
      if (auto* c = std::get_if<Communicate>(&r)) {
        if (std::find(c->tensors.begin(), c->tensors.end(), tensor) != c->tensors.end()) at = c->at;
      }
    }
    std::size_t d;
    if (at) {
      auto pos = loop_pos(*at);
      if (!pos) fail(ErrorCode::IllFormed, "communicate at " + *at + ", which is not a loop");
      d = *pos;
    } else {
      if (p.loops == 0) return kTaskScope;
      d = p.loops - 1;
    }
    std::size_t kd = p.ex->kernel_depth();
    if (d >= kd) {
      if (kd == 0) return kTaskScope;
      d = kd - 1;
    }
    return d < p.base ? kTaskScope : d;
  };

  const NestExecutor& ex = *p.ex;
  if (ex.is_place()) {
    p.place = true;
    p.inputs.push_back({ex.lhs().tensor, {ex.lhs().slots}, scope_of(ex.lhs().tensor)});
  } else {
    p.output = ex.lhs().tensor;
    for (const auto& a : ex.rhs()) {
      if (a.tensor == p.output) fail(ErrorCode::IllFormed, "tensor " + a.tensor + " is both read and written");
      auto it = std::find_if(p.inputs.begin(), p.inputs.end(), [&](const Use& u) { return u.tensor == a.tensor; });
      if (it == p.inputs.end()) {
        p.inputs.push_back({a.tensor, {}, scope_of(a.tensor)});
        it = p.inputs.end() - 1;
      }
      it->accesses.push_back(a.slots);
      p.access_use.push_back(static_cast<std::size_t>(it - p.inputs.begin()));
    }
    // Reduce-sum when a loop above the task body feeds no output coordinate.
    std::set<std::size_t> feeds(ex.lhs().slots.begin(), ex.lhs().slots.end());
    const auto& rules = p.resolver().rules();
    for (auto it = rules.rbegin(); it != rules.rend(); ++it) {
      if (feeds.count(it->target)) feeds.insert(it->inputs.begin(), it->inputs.end());
    }
    for (std::size_t k = 0; k < p.base; ++k) {
      if (ex.accumulates() && loops[k].extent > 1 && !feeds.count(k)) p.out_priv = Privilege::ReduceSum;
    }
  }
  for (const Use& u : p.inputs) {
    if (u.scope != kTaskScope) p.step_depth = std::min(p.step_depth, u.scope);
  }
  if (p.step_depth != kTaskScope) {
    for (std::size_t k = p.base; k <= p.step_depth; ++k) p.steps *= loops[k].extent;
  }
  return p;
}

// ---- task execution -------------------------------------------------------------

struct Buffer {
  HyperRect rect;
  std::vector<double> data;
  std::vector<char> written;

  explicit Buffer(HyperRect r) : rect(std::move(r)) {
    data.assign(static_cast<std::size_t>(rect.volume()), 0.0);
    written.assign(data.size(), 0);
  }
  std::size_t offset(std::span<const int64_t> c) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      off = off * static_cast<std::size_t>(rect.dims[k].size()) + static_cast<std::size_t>(c[k] - rect.dims[k].lo);
    }
    return off;
  }
};

struct TaskOutcome {
  std::vector<std::pair<int64_t, CommEvent>> events;  // (relative step, event)
  int64_t peak = 0;
  std::optional<Buffer> buffer;
  bool ran = false;
};

struct Task {
  std::size_t proc;
  std::vector<int64_t> point;  // group loop values
};

struct Launch {
  const NestPlan& plan;
  const Machine& m;
  Phase phase;
  std::vector<const Layout*> layouts;      // per input use
  std::vector<const DenseTensor*> data;    // per input use, empty for placement
  const Layout* out_layout = nullptr;
  DenseTensor* out = nullptr;
  std::vector<int64_t> outer;              // values of outer loops
  std::vector<Task> tasks;
};

bool task_selected(const NestPlan& plan, std::span<const int64_t> values) {
  for (const auto& [slot, value] : plan.resolver().fixes()) {
    if (slot < plan.base && values[slot] != value) return false;
  }
  return true;
}

std::vector<Task> tasks_of(const NestPlan& plan, const Machine& m, const std::vector<int64_t>& outer) {
  std::vector<Task> out;
  std::vector<int64_t> values(plan.base, 0);
  std::copy(outer.begin(), outer.end(), values.begin());
  if (plan.group == 0) {
    if (task_selected(plan, values)) out.push_back({0, {}});
    return out;
  }
  for (const ProcCoord& c : m.enumerate()) {
    std::copy(c.begin(), c.end(), values.begin() + static_cast<std::ptrdiff_t>(plan.outer));
    if (task_selected(plan, values)) out.push_back({static_cast<std::size_t>(m.index_of(c)), c});
  }
  return out;
}

class TaskRunner {
 public:
  TaskRunner(const Launch& l, const Task& t) : l_(l), plan_(l.plan), task_(t), fetched_(plan_.inputs.size()) {}

  TaskOutcome run() {
    TaskOutcome out;
    out.ran = true;
    std::vector<int64_t> values(plan_.resolver().num_slots(), 0);
    std::copy(l_.outer.begin(), l_.outer.end(), values.begin());
    std::copy(task_.point.begin(), task_.point.end(), values.begin() + static_cast<std::ptrdiff_t>(plan_.outer));

    for (std::size_t u = 0; u < plan_.inputs.size(); ++u) {
      if (plan_.inputs[u].scope == kTaskScope) fetch(u, values, plan_.base, 0, out);
    }
    if (plan_.place) return out;

    setup_output(values, out);
    auto read = [&](std::size_t idx, std::span<const int64_t> c) {
      std::size_t u = plan_.access_use[idx];
      if (!readable(u, c)) {
        fail(ErrorCode::OOBAccess, plan_.inputs[u].tensor + " element " + format_coord({c.begin(), c.end()}) +
                                       " is not in the memory of " + format_coord(l_.m.coord_of(static_cast<int64_t>(task_.proc))));
      }
      return l_.data[u]->at(c);
    };
    auto write = [&](std::span<const int64_t> c, double v, bool acc) {
      if (out.buffer) {
        Buffer& b = *out.buffer;
        if (!b.rect.contains(c)) fail(ErrorCode::OOBAccess, "write outside the task's output region");
        std::size_t off = b.offset(c);
        b.data[off] = acc ? b.data[off] + v : v;
        b.written[off] = 1;
      } else if (acc) {
        l_.out->at(c) += v;
      } else {
        l_.out->at(c) = v;
      }
    };
    int64_t step = 0;
    auto on_iter = [&](std::size_t depth, std::span<const int64_t> vals) {
      if (depth == plan_.step_depth) step = step_index(vals);
      for (std::size_t u = 0; u < plan_.inputs.size(); ++u) {
        if (plan_.inputs[u].scope == depth) fetch(u, vals, depth + 1, step, out);
      }
    };
    plan_.ex->run(values, plan_.base, read, write, on_iter);
    out.peak = std::max(out.peak, scratch_volume() + buffer_volume_);
    return out;
  }

 private:
  int64_t step_index(std::span<const int64_t> vals) const {
    int64_t s = 0;
    const auto& loops = plan_.loop_vars();
    for (std::size_t k = plan_.base; k <= plan_.step_depth; ++k) s = s * loops[k].extent + vals[k];
    return s;
  }

  std::optional<HyperRect> requirement(std::size_t u, std::span<const int64_t> values, std::size_t fixed) const {
    if (!slot_intervals(plan_.resolver(), plan_.loops, values, fixed, iv_)) return std::nullopt;
    return rect_of(plan_.inputs[u].accesses, iv_);
  }

  // Loop values of the previous iteration of loops [base, depth).
  bool previous(std::vector<int64_t>& vals, std::size_t fixed) const {
    const auto& loops = plan_.loop_vars();
    for (std::size_t k = fixed; k-- > plan_.base;) {
      if (vals[k] > 0) {
        --vals[k];
        return true;
      }
      vals[k] = loops[k].extent - 1;
    }
    return false;
  }

  int64_t scratch_volume() const {
    int64_t v = 0;
    for (const Fetched& f : fetched_) v += f.cur_vol + f.prev_vol;
    return v;
  }

  void fetch(std::size_t u, std::span<const int64_t> values, std::size_t fixed, int64_t step, TaskOutcome& out) {
    Fetched& f = fetched_[u];
    f.prev = f.cur;
    f.prev_vol = f.cur_vol;
    f.cur = requirement(u, values, fixed);
    f.cur_vol = 0;
    if (!f.cur) return;
    const Layout& lay = *l_.layouts[u];
    const HyperRect& rect = *f.cur;

    std::optional<std::vector<int64_t>> prev_vals;
    if (fixed > plan_.base) {
      std::vector<int64_t> pv(values.begin(), values.end());
      if (previous(pv, fixed)) prev_vals = std::move(pv);
    }
    for (std::size_t k = 0; k < lay.pieces.size(); ++k) {
      HyperRect part = lay.pieces[k].intersect(rect);
      if (part.empty() || lay.holds(task_.proc, k)) continue;
      f.cur_vol += part.volume();
      if (f.prev && f.prev->contains(part)) continue;
      std::size_t src = lay.holders[k].front();
      if (prev_vals) {
        for (const Task& q : l_.tasks) {
          if (q.proc == task_.proc) continue;
          std::vector<int64_t> qv = *prev_vals;
          std::copy(q.point.begin(), q.point.end(), qv.begin() + static_cast<std::ptrdiff_t>(plan_.outer));
          auto held = requirement(u, qv, fixed);
          if (held && held->contains(part)) {
            src = q.proc;
            break;
          }
        }
      }
      out.events.emplace_back(step, make_event(src, task_.proc, plan_.inputs[u].tensor, part, EventKind::Copy));
    }
    out.peak = std::max(out.peak, scratch_volume() + buffer_volume_);
  }

  CommEvent make_event(std::size_t src, std::size_t dst, const std::string& tensor, const HyperRect& rect,
                       EventKind kind) const {
    CommEvent e;
    e.phase = l_.phase;
    e.src = l_.m.coord_of(static_cast<int64_t>(src));
    e.dst = l_.m.coord_of(static_cast<int64_t>(dst));
    e.tensor = tensor;
    e.rect = rect;
    e.elements = rect.volume();
    e.kind = kind;
    e.level = l_.m.first_differing_level(e.src, e.dst);
    return e;
  }

  bool readable(std::size_t u, std::span<const int64_t> c) const {
    const Fetched& f = fetched_[u];
    if (f.cur && f.cur->contains(c)) return true;
    const Layout& lay = *l_.layouts[u];
    for (std::size_t k : lay.held[task_.proc]) {
      if (lay.pieces[k].contains(c)) return true;
    }
    return false;
  }

  void setup_output(std::span<const int64_t> values, TaskOutcome& out) {
    const NestExecutor& ex = *plan_.ex;
    if (!slot_intervals(plan_.resolver(), plan_.loops, values, plan_.base, iv_)) return;
    HyperRect rect = *rect_of({ex.lhs().slots}, iv_);
    const Layout& lay = *l_.out_layout;
    if (plan_.out_priv == Privilege::ReduceSum) {
      out.buffer.emplace(rect);
      buffer_volume_ = rect.volume();
      return;
    }
    bool resident = true;
    int64_t foreign = 0;
    for (std::size_t k = 0; k < lay.pieces.size(); ++k) {
      HyperRect part = lay.pieces[k].intersect(rect);
      if (part.empty() || lay.holds(task_.proc, k)) continue;
      resident = false;
      foreign += part.volume();
      if (ex.accumulates()) {
        out.events.emplace_back(0, make_event(lay.holders[k].front(), task_.proc, plan_.output, part, EventKind::Copy));
      }
    }
    if (resident) return;
    out.buffer.emplace(rect);
    buffer_volume_ = foreign;
    if (ex.accumulates()) {
      Buffer& b = *out.buffer;
      for_each_coord(rect, [&](std::span<const int64_t> c) { b.data[b.offset(c)] = l_.out->at(c); });
    }
  }

  struct Fetched {
    std::optional<HyperRect> cur, prev;
    int64_t cur_vol = 0, prev_vol = 0;
  };

  const Launch& l_;
  const NestPlan& plan_;
  const Task& task_;
  std::vector<Fetched> fetched_;
  int64_t buffer_volume_ = 0;
  mutable std::vector<Interval> iv_;
};

struct LaunchResult {
  std::vector<CommEvent> events;
  std::vector<std::pair<std::size_t, int64_t>> peaks;  // (proc, peak)
};

LaunchResult run_launch(const Launch& l, int64_t step0, int workers, std::vector<TraceSlot>* slots,
                        std::size_t launch_id) {
  std::vector<TaskOutcome> outcomes(l.tasks.size());
  std::vector<std::exception_ptr> errors(l.tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < l.tasks.size(); k = next++) {
      try {
        outcomes[k] = TaskRunner(l, l.tasks[k]).run();
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), l.tasks.size());
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  LaunchResult res;
  struct Keyed {
    int64_t step;
    std::size_t task, seq;
    CommEvent event;
  };
  std::vector<Keyed> keyed;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    for (std::size_t s = 0; s < outcomes[k].events.size(); ++s) {
      auto& [step, ev] = outcomes[k].events[s];
      keyed.push_back({step, k, s, std::move(ev)});
    }
    res.peaks.emplace_back(l.tasks[k].proc, outcomes[k].peak);
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.step, a.task, a.seq) < std::tie(b.step, b.task, b.seq);
  });
  for (Keyed& k : keyed) {
    k.event.timestep = step0 + k.step;
    res.events.push_back(std::move(k.event));
  }

  const int64_t last = step0 + l.plan.steps - 1;
  auto event = [&](std::size_t src, std::size_t dst, const HyperRect& rect, EventKind kind) {
    CommEvent e;
    e.phase = l.phase;
    e.timestep = last;
    e.src = l.m.coord_of(static_cast<int64_t>(src));
    e.dst = l.m.coord_of(static_cast<int64_t>(dst));
    e.tensor = l.plan.output;
    e.rect = rect;
    e.elements = rect.volume();
    e.kind = kind;
    e.level = l.m.first_differing_level(e.src, e.dst);
    return e;
  };
  if (!l.plan.place) {
    const Layout& lay = *l.out_layout;
    for (std::size_t k = 0; k < lay.pieces.size(); ++k) {
      std::size_t home = lay.holders[k].front();
      for (std::size_t t = 0; t < outcomes.size(); ++t) {
        const auto& buf = outcomes[t].buffer;
        if (!buf) continue;
        HyperRect part = lay.pieces[k].intersect(buf->rect);
        if (part.empty()) continue;
        std::size_t proc = l.tasks[t].proc;
        if (l.plan.out_priv == Privilege::ReduceSum) {
          for_each_coord(part, [&](std::span<const int64_t> c) { l.out->at(c) += buf->data[buf->offset(c)]; });
          if (proc != home) res.events.push_back(event(proc, home, part, EventKind::Reduce));
        } else {
          for_each_coord(part, [&](std::span<const int64_t> c) {
            std::size_t off = buf->offset(c);
            if (buf->written[off]) l.out->at(c) = buf->data[off];
          });
          if (!lay.holds(proc, k)) res.events.push_back(event(proc, home, part, EventKind::Copy));
        }
      }
    }
  }

  if (slots) {
    for (const Task& t : l.tasks) {
      for (int64_t s = 0; s < l.plan.steps; ++s) {
        slots->push_back({l.phase, step0 + s, l.m.coord_of(static_cast<int64_t>(t.proc)), launch_id, t.point});
      }
    }
  }
  return res;
}

// Every outer-loop point of a plan, in lexicographic order.
std::vector<std::vector<int64_t>> outer_points(const NestPlan& plan) {
  std::vector<int64_t> ext;
  for (std::size_t k = 0; k < plan.outer; ++k) ext.push_back(plan.loop_vars()[k].extent);
  std::vector<std::vector<int64_t>> out;
  for (int64_t e : ext) {
    if (e <= 0) return out;
  }
  std::vector<int64_t> c(ext.size(), 0);
  do {
    out.push_back(c);
  } while (!ext.empty() && next_coord(c, ext));
  return out;
}

std::vector<std::string> nest_tensors(const Nest& n) {
  std::vector<std::string> out;
  auto add = [&](const std::string& t) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  };
  if (n.leaf.is<Assign>()) {
    add(n.leaf.as<Assign>().lhs.tensor.name);
    for (const Access& a : n.leaf.as<Assign>().rhs.accesses()) add(a.tensor.name);
  } else if (n.leaf.is<Reduce>()) {
    add(n.leaf.as<Reduce>().lhs.tensor.name);
    for (const Access& a : n.leaf.as<Reduce>().rhs.accesses()) add(a.tensor.name);
  } else if (n.leaf.is<Place>()) {
    add(n.leaf.as<Place>().target.tensor.name);
  }
  return out;
}

const TensorDistribution& require_dist(const std::map<std::string, TensorDistribution>& dists,
                                       const std::string& t, const Machine& m) {
  auto it = dists.find(t);
  if (it == dists.end()) fail(ErrorCode::MissingDistribution, "no distribution for " + t);
  if (!(it->second.machine() == m)) {
    fail(ErrorCode::GridMismatch, "distribution of " + t + " targets machine " + it->second.machine().to_string() +
                                      ", not " + m.to_string());
  }
  return it->second;
}

}  // namespace

// ---- public API -------------------------------------------------------------------

std::optional<HyperRect> bounds_analysis(const Access& access, const std::vector<IndexVar>& loops,
                                         const std::vector<Relation>& relations,
                                         const std::map<std::string, int64_t>& fixed) {
  for (const auto& [name, v] : fixed) {
    if (!std::any_of(loops.begin(), loops.end(), [&](const IndexVar& l) { return l.name == name; })) {
      fail(ErrorCode::UnknownVar, "no loop binds " + name);
    }
  }
  // Fixed loops go first so that slot_intervals pins exactly them.
  std::vector<IndexVar> order;
  for (const IndexVar& l : loops) {
    if (fixed.count(l.name)) order.push_back(l);
  }
  std::size_t nfixed = order.size();
  for (const IndexVar& l : loops) {
    if (!fixed.count(l.name)) order.push_back(l);
  }
  VarResolver pr(order, relations);
  for (const IndexVar& v : access.indices) {
    if (!pr.slot(v.name)) fail(ErrorCode::NonAffineAccess, "variable " + v.name + " is not an affine function of the loops");
  }
  std::vector<int64_t> values(order.size(), 0);
  for (std::size_t k = 0; k < nfixed; ++k) values[k] = fixed.at(order[k].name);
  std::vector<Interval> iv;
  if (!slot_intervals(pr, order.size(), values, nfixed, iv)) return std::nullopt;
  HyperRect rect;
  for (const IndexVar& v : access.indices) rect.dims.push_back(iv[pr.require_slot(v.name)]);
  return rect;
}

std::vector<TaskLaunch> lower_to_tasks(const CinStmt& s, const std::map<std::string, TensorDistribution>& dists,
                                       const Machine& m) {
  std::vector<TaskLaunch> out;
  auto nests = flatten_nests(canonicalize(s));
  for (std::size_t n = 0; n < nests.size(); ++n) {
    for (const std::string& t : nest_tensors(nests[n])) require_dist(dists, t, m);
    NestPlan plan = make_plan(nests[n], m, KernelRegistry::defaults());
    const auto& loops = plan.loop_vars();
    for (const auto& op : outer_points(plan)) {
      TaskLaunch tl;
      tl.nest = n;
      for (std::size_t k = 0; k < plan.outer; ++k) tl.outer[loops[k].name] = op[k];
      for (std::size_t k = plan.outer; k < plan.base; ++k) tl.domain.push_back(loops[k]);
      for (const Use& u : plan.inputs) {
        tl.requirements.push_back(
            {u.tensor, Privilege::Read, u.scope == kTaskScope ? std::string() : loops[u.scope].name});
      }
      if (!plan.place) tl.requirements.push_back({plan.output, plan.out_priv, {}});
      tl.steps = plan.steps;
      out.push_back(std::move(tl));
    }
  }
  return out;
}

std::vector<CommEvent> redistribute(const TensorDistribution& from, const TensorDistribution& to, int64_t step) {
  if (from.tensor().name != to.tensor().name || from.tensor().dims != to.tensor().dims) {
    fail(ErrorCode::UnknownTensor, "redistribution between different tensors");
  }
  if (!(from.machine() == to.machine())) fail(ErrorCode::GridMismatch, "redistribution between machines");
  Layout src = make_layout(from);
  validate(to);
  auto nests = flatten_nests(lower_placement(to));
  NestPlan plan = make_plan(nests.front(), to.machine(), KernelRegistry::defaults());
  Launch l{plan, to.machine(), Phase::Placement, {&src}, {}, nullptr, nullptr, {}, {}};
  l.tasks = tasks_of(plan, to.machine(), {});
  return run_launch(l, step, 1, nullptr, 0).events;
}

SimResult simulate(const CinStmt& compute, const std::map<std::string, TensorDistribution>& dists,
                   const TensorMap& inputs, const SimOptions& opts) {
  const KernelRegistry& kernels = opts.kernels ? *opts.kernels : KernelRegistry::defaults();
  auto nests = flatten_nests(canonicalize(compute));
  if (nests.empty()) fail(ErrorCode::IllFormed, "nothing to simulate");
  std::vector<std::string> first = nest_tensors(nests.front());
  if (first.empty() || !dists.count(first.front())) {
    fail(ErrorCode::MissingDistribution, "no distribution for " + (first.empty() ? std::string("?") : first.front()));
  }
  const Machine m = dists.at(first.front()).machine();

  // Classify tensors: placed inputs vs tensors produced by some nest.
  std::vector<std::string> placed;
  std::set<std::string> produced;
  std::map<std::string, DenseTensor> store;
  std::vector<std::string> outputs;
  for (const Nest& n : nests) {
    auto ts = nest_tensors(n);
    if (n.leaf.is<Place>()) fail(ErrorCode::IllFormed, "placement statements are generated, not simulated");
    for (std::size_t k = 1; k < ts.size(); ++k) {
      const std::string& t = ts[k];
      const TensorDistribution& d = require_dist(dists, t, m);
      if (produced.count(t) || store.count(t)) continue;
      auto it = inputs.find(t);
      if (it == inputs.end()) fail(ErrorCode::MissingInput, "no value for " + t);
      if (it->second.dims() != d.tensor().dims) fail(ErrorCode::ExtentMismatch, "input " + t + " has wrong dims");
      store.emplace(t, it->second);
      placed.push_back(t);
    }
    const std::string& o = ts.front();
    const TensorDistribution& d = require_dist(dists, o, m);
    validate(d);
    if (d.replicated()) fail(ErrorCode::WriteToReplica, "output " + o + " is replicated by " + d.to_string());
    if (!produced.count(o)) {
      if (store.count(o)) fail(ErrorCode::IllFormed, "tensor " + o + " is written after being read");
      store.emplace(o, DenseTensor(d.tensor().dims));
      outputs.push_back(o);
    }
    produced.insert(o);
  }

  SimResult res;
  ExecutionTrace& trace = res.trace;
  trace.machine = m;
  std::vector<TraceSlot>* slots = opts.record_slots ? &trace.slots : nullptr;
  std::size_t launch_id = 0;

  // Placement: every input starts whole on the first processor.
  for (const std::string& t : placed) {
    const TensorDistribution& d = dists.at(t);
    TensorDistribution fresh = TensorDistribution::fresh(d.tensor(), m);
    Layout src = make_layout(fresh);
    auto pn = flatten_nests(lower_placement(d));
    NestPlan plan = make_plan(pn.front(), m, kernels);
    Launch l{plan, m, Phase::Placement, {&src}, {}, nullptr, nullptr, {}, {}};
    l.tasks = tasks_of(plan, m, {});
    auto lr = run_launch(l, trace.placement_steps, opts.workers, slots, launch_id++);
    trace.events.insert(trace.events.end(), lr.events.begin(), lr.events.end());
    trace.placement_steps += plan.steps;
  }

  std::map<std::string, Layout> layouts;
  for (const auto& [name, tensor] : store) layouts.emplace(name, make_layout(dists.at(name)));
  std::vector<int64_t> resident(static_cast<std::size_t>(m.size()), 0);
  for (const auto& [name, lay] : layouts) {
    for (std::size_t p = 0; p < resident.size(); ++p) resident[p] += lay.resident_volume(p);
  }
  trace.memory_high_water = resident;

  for (const Nest& n : nests) {
    NestPlan plan = make_plan(n, m, kernels);
    std::vector<const Layout*> lays;
    std::vector<const DenseTensor*> data;
    for (const Use& u : plan.inputs) {
      lays.push_back(&layouts.at(u.tensor));
      data.push_back(&store.at(u.tensor));
    }
    for (const auto& op : outer_points(plan)) {
      Launch l{plan, m, Phase::Compute, lays, data, &layouts.at(plan.output), &store.at(plan.output), op, {}};
      l.tasks = tasks_of(plan, m, op);
      auto lr = run_launch(l, trace.compute_steps, opts.workers, slots, launch_id++);
      trace.events.insert(trace.events.end(), lr.events.begin(), lr.events.end());
      for (const auto& [proc, peak] : lr.peaks) {
        trace.memory_high_water[proc] = std::max(trace.memory_high_water[proc], resident[proc] + peak);
      }
      trace.compute_steps += plan.steps;
    }
  }

  for (const std::string& o : outputs) {
    res.outputs.emplace(o, store.at(o));
    const Layout& lay = layouts.at(o);
    auto& where = res.final_residency[o];
    for (std::size_t k = 0; k < lay.pieces.size(); ++k) {
      for (std::size_t h : lay.holders[k]) where.emplace_back(m.coord_of(static_cast<int64_t>(h)), lay.pieces[k]);
    }
  }
  return res;
}

SimStats stats(const ExecutionTrace& trace) {
  SimStats s;
  s.per_step.resize(static_cast<std::size_t>(trace.compute_steps));
  for (const CommEvent& e : trace.events) {
    Totals& t = e.phase == Phase::Compute ? s.compute : s.placement;
    t.messages += 1;
    t.elements += e.elements;
    (e.kind == EventKind::Copy ? t.copies : t.reduces) += 1;
    if (e.phase != Phase::Compute) continue;
    auto key = std::make_pair(static_cast<std::size_t>(trace.machine.index_of(e.src)),
                              static_cast<std::size_t>(trace.machine.index_of(e.dst)));
    s.per_edge[key].messages += 1;
    s.per_edge[key].elements += e.elements;
    if (e.timestep >= 0 && static_cast<std::size_t>(e.timestep) < s.per_step.size()) {
      Totals& st = s.per_step[static_cast<std::size_t>(e.timestep)];
      st.messages += 1;
      st.elements += e.elements;
      (e.kind == EventKind::Copy ? st.copies : st.reduces) += 1;
    }
  }
  s.memory_high_water = trace.memory_high_water;
  return s;
}

}  // namespace tendist
