#include "tendist/error.hpp"

namespace tendist {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ExtentMismatch: return "ExtentMismatch";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::RankMismatch: return "RankMismatch";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnboundMachineName: return "UnboundMachineName";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::FixedOutOfRange: return "FixedOutOfRange";
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::UnknownVar: return "UnknownVar";
    case ErrorCode::NonFreshVar: return "NonFreshVar";
    case ErrorCode::NotContiguousNest: return "NotContiguousNest";
    case ErrorCode::NotPermutation: return "NotPermutation";
    case ErrorCode::DimCountMismatch: return "DimCountMismatch";
    case ErrorCode::UnknownTensor: return "UnknownTensor";
    case ErrorCode::IBelowT: return "IBelowT";
    case ErrorCode::NotInnermost: return "NotInnermost";
    case ErrorCode::IllFormed: return "IllFormed";
    case ErrorCode::UnknownKernel: return "UnknownKernel";
    case ErrorCode::NonAffineAccess: return "NonAffineAccess";
    case ErrorCode::MissingDistribution: return "MissingDistribution";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::WriteToReplica: return "WriteToReplica";
    case ErrorCode::OOBAccess: return "OOBAccess";
    case ErrorCode::NonSquareGrid: return "NonSquareGrid";
    case ErrorCode::NonCubeGrid: return "NonCubeGrid";
    case ErrorCode::BadGrid: return "BadGrid";
    case ErrorCode::FactorMismatch: return "FactorMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace tendist
