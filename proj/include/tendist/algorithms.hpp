#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tendist/distribution.hpp"
#include "tendist/kernels.hpp"
#include "tendist/machine.hpp"
#include "tendist/scheduling.hpp"
#include "tendist/simulator.hpp"

namespace tendist {

/// Returns a description of the first violation, or nullopt when the trace fits.
using Signature = std::function<std::optional<std::string>(const ExecutionTrace&)>;

struct AlgorithmBundle {
  std::string name;
  std::string kernel;
  Machine machine;
  std::map<std::string, std::string> distributions;  // tensor -> "xy -> xy"
  Schedule schedule;
  Signature signature;
};

AlgorithmBundle summa(int64_t gx, int64_t gy, int64_t chunk);
/// Throws NonSquareGrid unless gx == gy.
AlgorithmBundle cannon(int64_t gx, int64_t gy);
/// Broadcasts B along rows and rotates C along columns; `rotate_b` swaps the roles.
/// Throws NonSquareGrid unless gx == gy.
AlgorithmBundle pumma(int64_t gx, int64_t gy, int64_t chunk, bool rotate_b = false);
/// Machine g x g x g. Throws NonCubeGrid.
AlgorithmBundle johnson(int64_t gx, int64_t gy, int64_t gz);
/// Cannon slices over (i,j) with k distributed over gz; each slice's k range is
/// divided into `chunks` rotated parts. Throws BadGrid.
AlgorithmBundle solomonik(int64_t gx, int64_t gy, int64_t gz, int64_t chunks);

struct CosmaFactors {
  int64_t par_i = 1, par_j = 1, par_k = 1;
  int64_t seq_i = 1, seq_j = 1, seq_k = 1;
};
AlgorithmBundle cosma_like(const CosmaFactors& f);

/// SUMMA over a two-level machine gx x gy / gz; rows of each tile split across the inner level.
AlgorithmBundle summa_hier(int64_t gx, int64_t gy, int64_t gz, int64_t chunk);

AlgorithmBundle ttv(int64_t p);
AlgorithmBundle ttm(int64_t p);
AlgorithmBundle innerprod(int64_t p);
AlgorithmBundle mttkrp(int64_t gx, int64_t gy);

struct AlgorithmParams {
  int64_t chunk = 2;
  CosmaFactors cosma;
  bool rotate_b = false;
};

std::vector<std::string> algorithm_names();
/// Builds a bundle for machine `m`. Shape errors: NonSquareGrid, NonCubeGrid,
/// BadGrid, FactorMismatch, GridMismatch; unknown names give ConfigError.
AlgorithmBundle make_algorithm(const std::string& name, const Machine& m, const AlgorithmParams& p = {});

/// A bundle bound to concrete extents.
struct Instance {
  TensorIndexStmt stmt;
  std::map<std::string, TensorDistribution> distributions;
  CinStmt compute;
};
Instance instantiate(const AlgorithmBundle& b, const Extents& extents);

}  // namespace tendist
