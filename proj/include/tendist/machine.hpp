#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tendist/error.hpp"

namespace tendist {

/// A processor coordinate: the per-level coordinate tuples concatenated
/// outermost level first.
using ProcCoord = std::vector<int64_t>;

class Machine {
 public:
  Machine() : Machine(std::vector<std::vector<int64_t>>{{1}}) {}
  explicit Machine(std::vector<std::vector<int64_t>> levels);

  const std::vector<std::vector<int64_t>>& levels() const { return levels_; }
  std::size_t num_levels() const { return levels_.size(); }
  /// All grid dims, concatenated across levels.
  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t size() const { return size_; }

  /// Index into dims() of the first dim of `level`.
  std::size_t level_offset(std::size_t level) const { return offsets_[level]; }
  std::size_t level_of_dim(std::size_t dim) const;

  /// Lexicographic over the concatenated coordinate (level by level).
  std::vector<ProcCoord> enumerate() const;
  int64_t index_of(const ProcCoord& c) const;
  ProcCoord coord_of(int64_t index) const;

  /// The same processors viewed as one flat grid.
  Machine flattened() const { return Machine({dims_}); }

  /// Outermost level at which two processors differ, or -1 when equal.
  int first_differing_level(const ProcCoord& a, const ProcCoord& b) const;

  /// `3x3` or `2x2/4`.
  static Machine parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const Machine& o) const { return levels_ == o.levels_; }

 private:
  std::vector<std::vector<int64_t>> levels_;
  std::vector<int64_t> dims_;
  std::vector<std::size_t> offsets_;
  int64_t size_ = 1;
};

inline Machine make_machine(std::vector<std::vector<int64_t>> levels) {
  return Machine(std::move(levels));
}

std::string format_coord(const ProcCoord& c);

}  // namespace tendist
