#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tendist/cin.hpp"
#include "tendist/machine.hpp"
#include "tendist/tensor_ir.hpp"

namespace tendist {

/// One entry of the machine side of `X -> Y`.
struct DimName {
  enum class Kind { Var, Fixed, Broadcast };
  Kind kind = Kind::Var;
  std::string var;
  int64_t value = 0;

  static DimName named(std::string v) { return {Kind::Var, std::move(v), 0}; }
  static DimName fixed(int64_t v) { return {Kind::Fixed, {}, v}; }
  static DimName broadcast() { return {Kind::Broadcast, {}, 0}; }

  bool operator==(const DimName&) const = default;
};

struct DistLevel {
  std::vector<std::string> x;
  std::vector<DimName> y;
  bool operator==(const DistLevel&) const = default;
};

/// A distribution as written, before it is bound to a tensor and machine.
struct DistributionSpec {
  std::string tensor;
  std::vector<DistLevel> levels;
};

/// `A: xy -> xy*`, hierarchical levels separated by `;` (`A: xy -> xy ; zw -> z`).
DistributionSpec parse_distribution(std::string_view text);
std::string to_string(const DistributionSpec& spec);

struct Interval {
  int64_t lo = 0;
  int64_t hi = 0;
  int64_t size() const { return hi > lo ? hi - lo : 0; }
  bool empty() const { return hi <= lo; }
  bool contains(int64_t v) const { return v >= lo && v < hi; }
  bool operator==(const Interval&) const = default;
};

struct HyperRect {
  std::vector<Interval> dims;

  int64_t volume() const;
  bool empty() const;
  bool contains(std::span<const int64_t> coord) const;
  bool contains(const HyperRect& other) const;
  HyperRect intersect(const HyperRect& other) const;
  bool operator==(const HyperRect&) const = default;
  /// `[0,2)x[2,4)`; a scalar prints as `[]`.
  std::string to_string() const;
};

HyperRect full_rect(const std::vector<int64_t>& dims);

/// [index*B, min((index+1)*B, extent)) with B = ceil(extent/parts), clamped so lo <= hi.
Interval block_range(int64_t extent, int64_t parts, int64_t index);

/// A point in the partitioned machine dimensions, concatenated over levels.
using Color = std::vector<int64_t>;

class TensorDistribution {
 public:
  /// A partitioned machine dimension and the tensor dimension it blocks.
  struct Part {
    std::size_t level;
    std::size_t machine_dim;  // index into Machine::dims()
    std::size_t tensor_dim;
  };

  TensorDistribution(TensorVar tensor, Machine machine, std::vector<DistLevel> levels);
  TensorDistribution(TensorVar tensor, Machine machine, const DistributionSpec& spec);

  /// Whole tensor on the first processor in enumerate order.
  static TensorDistribution fresh(TensorVar tensor, Machine machine);

  const TensorVar& tensor() const { return tensor_; }
  const Machine& machine() const { return machine_; }
  const std::vector<DistLevel>& levels() const { return levels_; }
  const std::vector<Part>& parts() const { return parts_; }
  bool replicated() const;
  std::string to_string() const;

 private:
  TensorVar tensor_;
  Machine machine_;
  std::vector<DistLevel> levels_;
  std::vector<Part> parts_;
};

/// Throws RankMismatch, DuplicateName or UnboundMachineName.
void validate(const TensorDistribution& d);

Color color_of(const TensorDistribution& d, std::span<const int64_t> coord);
/// Processors holding the piece of color `c`, in enumerate order.
std::vector<ProcCoord> processors_of(const TensorDistribution& d, const Color& c);
HyperRect piece_bounds(const TensorDistribution& d, const Color& c);
/// All colors, lexicographic.
std::vector<Color> colors(const TensorDistribution& d);
/// The color whose piece processor `p` holds, if any.
std::optional<Color> color_on(const TensorDistribution& d, const ProcCoord& p);
/// First processor in enumerate order among processors_of(c).
ProcCoord home_of(const TensorDistribution& d, const Color& c);

/// Name used for a machine dimension in printed relations: gx, gy, gz, g3, ...
std::string machine_dim_label(std::size_t dim);

/// The placement statement that materializes each piece in every memory it maps to.
CinStmt lower_placement(const TensorDistribution& d);

}  // namespace tendist
