#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tendist/algorithms.hpp"

namespace tendist {

struct RunConfig {
  std::string kernel;  // named kernel
  std::string expr;    // or an inline statement such as `A(i,j) = B(i,k) * C(k,j)`
  std::string machine;
  std::vector<std::string> dists;  // `A: xy -> xy`, overriding bundle defaults
  std::string algorithm;
  std::string schedule_path;
  std::optional<std::string> schedule_text;  // inline script, used instead of reading a file
  std::optional<int64_t> n;
  std::string dims;  // `i=4,j=5,k=6`
  int64_t chunk = 2;
  AlgorithmParams params;  // chunk is copied in from `chunk`
  uint64_t seed = 1;
  bool verify = false;
  std::string stats_path = "stats.json";
  std::string trace_path;
  int workers = 0;  // 0: TENDIST_WORKERS, else 1
};

/// Everything a run needs once the config has been checked.
struct ResolvedRun {
  Machine machine;
  TensorIndexStmt stmt;
  Extents extents;
  std::map<std::string, TensorDistribution> distributions;
  Schedule schedule;
  std::optional<AlgorithmBundle> bundle;
};

/// Throws Error (ConfigError, IoError or any library code) when the config is unusable.
ResolvedRun resolve(const RunConfig& c);

/// Placement statements followed by the compute statement after each command.
/// Without a kernel, placements are printed for the `--dist` tensors alone.
std::string explain(const RunConfig& c);

nlohmann::json stats_json(const RunConfig& c, const ResolvedRun& r, const SimStats& s);

/// Exit status: 0 success, 1 verification failure, 2 configuration error.
int run(const RunConfig& c, std::ostream& out, std::ostream& err);

/// The stats document without its timestamp, for comparing runs.
nlohmann::json without_timestamp(nlohmann::json j);

}  // namespace tendist
