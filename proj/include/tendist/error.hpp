#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tendist {

enum class ErrorCode {
  // tensor-ir
  ExtentMismatch,
  ArityMismatch,
  MissingInput,
  ParseError,
  // machine
  EmptyGrid,
  // distribution
  RankMismatch,
  DuplicateName,
  UnboundMachineName,
  OutOfBounds,
  FixedOutOfRange,
  // cin / scheduling
  UnboundVariable,
  UnknownVar,
  NonFreshVar,
  NotContiguousNest,
  NotPermutation,
  DimCountMismatch,
  UnknownTensor,
  IBelowT,
  NotInnermost,
  IllFormed,
  UnknownKernel,
  // simulator
  NonAffineAccess,
  MissingDistribution,
  GridMismatch,
  WriteToReplica,
  OOBAccess,
  // algorithms
  NonSquareGrid,
  NonCubeGrid,
  BadGrid,
  FactorMismatch,
  // cli
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// The single exception type thrown by the library. Callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace tendist
