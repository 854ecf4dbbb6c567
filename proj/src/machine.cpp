#include "tendist/machine.hpp"

#include <charconv>

namespace tendist {

Machine::Machine(std::vector<std::vector<int64_t>> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) fail(ErrorCode::EmptyGrid, "machine has no levels");
  for (const auto& level : levels_) {
    if (level.empty()) fail(ErrorCode::EmptyGrid, "machine level has no dims");
    offsets_.push_back(dims_.size());
    for (int64_t d : level) {
      if (d <= 0) fail(ErrorCode::EmptyGrid, "machine dim must be positive");
      dims_.push_back(d);
      size_ *= d;
    }
  }
}

std::size_t Machine::level_of_dim(std::size_t dim) const {
  std::size_t l = 0;
  while (l + 1 < offsets_.size() && offsets_[l + 1] <= dim) ++l;
  return l;
}

std::vector<ProcCoord> Machine::enumerate() const {
  std::vector<ProcCoord> out;
  out.reserve(static_cast<std::size_t>(size_));
  for (int64_t k = 0; k < size_; ++k) out.push_back(coord_of(k));
  return out;
}

int64_t Machine::index_of(const ProcCoord& c) const {
  if (c.size() != dims_.size()) fail(ErrorCode::OutOfBounds, "coordinate rank mismatch");
  int64_t idx = 0;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (c[k] < 0 || c[k] >= dims_[k]) fail(ErrorCode::OutOfBounds, "coordinate outside machine");
    idx = idx * dims_[k] + c[k];
  }
  return idx;
}

ProcCoord Machine::coord_of(int64_t index) const {
  ProcCoord c(dims_.size());
  for (std::size_t k = dims_.size(); k-- > 0;) {
    c[k] = index % dims_[k];
    index /= dims_[k];
  }
  return c;
}

int Machine::first_differing_level(const ProcCoord& a, const ProcCoord& b) const {
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (a[k] != b[k]) return static_cast<int>(level_of_dim(k));
  }
  return -1;
}

Machine Machine::parse(std::string_view text) {
  std::vector<std::vector<int64_t>> levels(1);
  const char* p = text.data();
  const char* end = p + text.size();
  if (p == end) fail(ErrorCode::ConfigError, "empty machine spec");
  while (p < end) {
    int64_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) fail(ErrorCode::ConfigError, "bad machine spec '" + std::string(text) + "'");
    levels.back().push_back(v);
    p = next;
    if (p == end) break;
    if (*p == 'x') {
      ++p;
    } else if (*p == '/') {
      levels.emplace_back();
      ++p;
    } else {
      fail(ErrorCode::ConfigError, "bad machine spec '" + std::string(text) + "'");
    }
    if (p == end) fail(ErrorCode::ConfigError, "bad machine spec '" + std::string(text) + "'");
  }
  return Machine(std::move(levels));
}

std::string Machine::to_string() const {
  std::string s;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (l) s += "/";
    for (std::size_t k = 0; k < levels_[l].size(); ++k) {
      if (k) s += "x";
      s += std::to_string(levels_[l][k]);
    }
  }
  return s;
}

std::string format_coord(const ProcCoord& c) {
  std::string s = "(";
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(c[k]);
  }
  return s + ")";
}

}  // namespace tendist
