#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tendist/tensor_ir.hpp"

namespace tendist {

using Extents = std::map<std::string, int64_t>;

/// Named statements:
///   gemm       A(i,j) = B(i,k) * C(k,j)
///   ttv        A(i,j) = B(i,j,k) * c(k)
///   ttm        A(i,j,l) = B(i,j,k) * C(k,l)
///   innerprod  a = B(i,j,k) * C(i,j,k)
///   mttkrp     A(i,l) = B(i,j,k) * C(j,l) * D(k,l)
TensorIndexStmt make_kernel(const std::string& name, const Extents& extents);
std::vector<std::string> kernel_names();
/// Index variables a kernel needs extents for.
std::vector<std::string> kernel_vars(const std::string& name);
/// Every kernel variable set to n.
Extents uniform_extents(const std::string& name, int64_t n);

/// Seeded integer-valued inputs in [-4, 4] for every rhs tensor.
TensorMap random_inputs(const TensorIndexStmt& stmt, uint64_t seed);

}  // namespace tendist
