#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tendist/cin.hpp"
#include "tendist/distribution.hpp"
#include "tendist/machine.hpp"
#include "tendist/tensor_ir.hpp"

namespace tendist {

enum class Phase { Placement, Compute };
enum class EventKind { Copy, Reduce };
enum class Privilege { Read, Write, ReduceSum };

const char* to_string(Phase p);
const char* to_string(EventKind k);
const char* to_string(Privilege p);

struct CommEvent {
  Phase phase = Phase::Compute;
  int64_t timestep = 0;
  ProcCoord src;
  ProcCoord dst;
  std::string tensor;
  HyperRect rect;
  int64_t elements = 0;
  EventKind kind = EventKind::Copy;
  int level = 0;  // first machine level where src and dst differ
};

/// One-line rendering used by trace dumps.
std::string to_string(const CommEvent& e);

/// A processor executing one task instance during one timestep.
struct TraceSlot {
  Phase phase = Phase::Compute;
  int64_t timestep = 0;
  ProcCoord proc;
  std::size_t launch = 0;
  std::vector<int64_t> point;
};

struct ExecutionTrace {
  Machine machine;
  std::vector<CommEvent> events;
  std::vector<TraceSlot> slots;
  int64_t placement_steps = 0;
  int64_t compute_steps = 0;
  /// Compute-phase peak resident elements, indexed by enumerate order.
  std::vector<int64_t> memory_high_water;
};

// ---- bounds analysis ---------------------------------------------------------

/// Tightest box containing every coordinate `access` touches when the loops in
/// `fixed` take those values and every other loop ranges over its extent.
/// nullopt when no iteration point survives the guards. Throws NonAffineAccess.
std::optional<HyperRect> bounds_analysis(const Access& access, const std::vector<IndexVar>& loops,
                                         const std::vector<Relation>& relations,
                                         const std::map<std::string, int64_t>& fixed);

// ---- lowering to index task launches -----------------------------------------

struct RegionRequirement {
  std::string tensor;
  Privilege privilege = Privilege::Read;
  /// Loop whose iterations aggregate the requirement; empty for task scope.
  std::string scope;
};

struct TaskLaunch {
  std::size_t nest = 0;                // Seq branch
  std::map<std::string, int64_t> outer;  // values of sequential loops above the launch
  std::vector<IndexVar> domain;         // distributed loops, one per machine dim
  std::vector<RegionRequirement> requirements;
  int64_t steps = 1;
};

/// Throws MissingDistribution or GridMismatch.
std::vector<TaskLaunch> lower_to_tasks(const CinStmt& s, const std::map<std::string, TensorDistribution>& dists,
                                       const Machine& m);

// ---- execution ---------------------------------------------------------------

struct SimOptions {
  int workers = 1;
  bool record_slots = true;
  const KernelRegistry* kernels = nullptr;  // defaults() when null
};

struct SimResult {
  TensorMap outputs;
  ExecutionTrace trace;
  /// Processors holding each output piece after completion.
  std::map<std::string, std::vector<std::pair<ProcCoord, HyperRect>>> final_residency;
};

/// Places every input from the first processor into its distribution, then runs
/// the compute statement. Throws MissingDistribution, GridMismatch,
/// WriteToReplica, OOBAccess, MissingInput or ExtentMismatch.
SimResult simulate(const CinStmt& compute, const std::map<std::string, TensorDistribution>& dists,
                   const TensorMap& inputs, const SimOptions& opts = {});

/// Events that move `tensor` from layout `from` to layout `to` (placement phase,
/// timestep `step`). Both distributions must share a tensor and machine.
std::vector<CommEvent> redistribute(const TensorDistribution& from, const TensorDistribution& to,
                                    int64_t step = 0);

// ---- statistics --------------------------------------------------------------

struct Totals {
  int64_t messages = 0;
  int64_t elements = 0;
  int64_t copies = 0;
  int64_t reduces = 0;
};

struct EdgeStats {
  int64_t messages = 0;
  int64_t elements = 0;
};

struct SimStats {
  Totals compute;
  Totals placement;
  /// Compute phase, keyed by (src, dst) enumerate indices.
  std::map<std::pair<std::size_t, std::size_t>, EdgeStats> per_edge;
  std::vector<Totals> per_step;  // compute phase
  std::vector<int64_t> memory_high_water;
};

SimStats stats(const ExecutionTrace& trace);

}  // namespace tendist
