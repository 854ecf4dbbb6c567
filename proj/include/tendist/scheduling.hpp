#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "tendist/cin.hpp"

namespace tendist {

/// Machine dims for the compound distribute. Labels name the dims in printed
/// divide relations and default to gx, gy, gz, ...
struct Grid {
  std::vector<int64_t> dims;
  std::vector<std::string> labels;

  Grid(std::initializer_list<int64_t> d) : dims(d) {}
  explicit Grid(std::vector<int64_t> d, std::vector<std::string> l = {})
      : dims(std::move(d)), labels(std::move(l)) {}
  std::string label(std::size_t k) const;
};

CinStmt split(const CinStmt& s, const std::string& i, const std::string& io, const std::string& ii,
              int64_t chunk);
CinStmt divide(const CinStmt& s, const std::string& i, const std::string& io, const std::string& ii,
               int64_t parts, const std::string& label = "");
CinStmt reorder(const CinStmt& s, const std::vector<std::string>& vars);
CinStmt parallelize(const CinStmt& s, const std::string& i);
/// Simple form: marks loops as distributed without changing the nest.
CinStmt distribute(const CinStmt& s, const std::vector<std::string>& vars);
/// Compound form: divide each target by its grid dim, move the outer halves
/// outermost followed by the inner halves, then distribute the outer halves.
CinStmt distribute(const CinStmt& s, const std::vector<std::string>& targets,
                   const std::vector<std::string>& dist, const std::vector<std::string>& local,
                   const Grid& grid);
CinStmt communicate(const CinStmt& s, const std::vector<std::string>& tensors, const std::string& at);
CinStmt rotate(const CinStmt& s, const std::string& t, const std::vector<std::string>& over,
               const std::string& r);
CinStmt substitute_leaf(const CinStmt& s, const std::vector<std::string>& vars, const std::string& kernel);

/// An ordered list of scheduling commands, built fluently or parsed from text.
class Schedule {
 public:
  struct Command {
    std::string text;  // line-oriented text form
    std::function<CinStmt(const CinStmt&)> apply;
  };

  Schedule& split(const std::string& i, const std::string& io, const std::string& ii, int64_t chunk);
  Schedule& divide(const std::string& i, const std::string& io, const std::string& ii, int64_t parts,
                   const std::string& label = "");
  Schedule& reorder(const std::vector<std::string>& vars);
  Schedule& parallelize(const std::string& i);
  Schedule& distribute(const std::vector<std::string>& vars);
  Schedule& distribute(const std::vector<std::string>& targets, const std::vector<std::string>& dist,
                       const std::vector<std::string>& local, const Grid& grid);
  Schedule& communicate(const std::vector<std::string>& tensors, const std::string& at);
  Schedule& rotate(const std::string& t, const std::vector<std::string>& over, const std::string& r);
  Schedule& substitute(const std::vector<std::string>& vars, const std::string& kernel);

  const std::vector<Command>& commands() const { return commands_; }
  bool empty() const { return commands_.empty(); }

  /// Applies every command in order.
  CinStmt apply(const CinStmt& s) const;
  /// The statement after each command, paired with the command text.
  std::vector<std::pair<std::string, CinStmt>> explain(const CinStmt& s) const;
  std::string to_text() const;

  /// One command per line; `#` starts a comment.
  static Schedule parse(std::string_view text);

 private:
  std::vector<Command> commands_;
};

}  // namespace tendist
