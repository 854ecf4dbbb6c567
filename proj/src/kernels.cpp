#include "tendist/kernels.hpp"

#include <random>

namespace tendist {

namespace {

struct KernelDef {
  const char* name;
  const char* text;
  std::vector<std::string> vars;
};

const std::vector<KernelDef>& defs() {
  static const std::vector<KernelDef> d = {
      {"gemm", "A(i,j) = B(i,k) * C(k,j)", {"i", "j", "k"}},
      {"ttv", "A(i,j) = B(i,j,k) * c(k)", {"i", "j", "k"}},
      {"ttm", "A(i,j,l) = B(i,j,k) * C(k,l)", {"i", "j", "k", "l"}},
      {"innerprod", "a = B(i,j,k) * C(i,j,k)", {"i", "j", "k"}},
      {"mttkrp", "A(i,l) = B(i,j,k) * C(j,l) * D(k,l)", {"i", "j", "k", "l"}},
  };
  return d;
}

const KernelDef& find(const std::string& name) {
  for (const KernelDef& k : defs()) {
    if (name == k.name) return k;
  }
  fail(ErrorCode::ConfigError, "unknown kernel '" + name + "'");
}

}  // namespace

TensorIndexStmt make_kernel(const std::string& name, const Extents& extents) {
  const KernelDef& k = find(name);
  for (const std::string& v : k.vars) {
    auto it = extents.find(v);
    if (it == extents.end()) fail(ErrorCode::ConfigError, name + " needs an extent for " + v);
    if (it->second <= 0) fail(ErrorCode::ConfigError, "extent of " + v + " must be positive");
  }
  return parse_statement(k.text, extents);
}

std::vector<std::string> kernel_names() {
  std::vector<std::string> out;
  for (const KernelDef& k : defs()) out.push_back(k.name);
  return out;
}

std::vector<std::string> kernel_vars(const std::string& name) { return find(name).vars; }

Extents uniform_extents(const std::string& name, int64_t n) {
  Extents e;
  for (const std::string& v : kernel_vars(name)) e[v] = n;
  return e;
}

TensorMap random_inputs(const TensorIndexStmt& stmt, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(-4, 4);
  TensorMap out;
  for (const TensorVar& t : stmt.tensors()) {
    if (t.name == stmt.lhs.tensor.name) continue;
    DenseTensor v(t.dims);
    for (double& x : v.data()) x = dist(rng);
    out.emplace(t.name, std::move(v));
  }
  return out;
}

}  // namespace tendist
