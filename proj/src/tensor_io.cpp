#include "tendist/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tendist {

namespace {

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) fail(ErrorCode::IoError, "truncated tensor file");
  uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<uint64_t>(b[k]) << (8 * k);
  return v;
}

}  // namespace

void write_binary(std::ostream& os, const DenseTensor& t) {
  put_u64(os, t.order());
  for (int64_t d : t.dims()) put_u64(os, static_cast<uint64_t>(d));
  for (double x : t.data()) put_u64(os, std::bit_cast<uint64_t>(x));
}

DenseTensor read_binary(std::istream& is) {
  uint64_t order = get_u64(is);
  if (order > 64) fail(ErrorCode::IoError, "implausible tensor order");
  std::vector<int64_t> dims(order);
  uint64_t n = 1;
  for (auto& d : dims) {
    d = static_cast<int64_t>(get_u64(is));
    if (d <= 0) fail(ErrorCode::IoError, "non-positive dim in tensor file");
    n *= static_cast<uint64_t>(d);
  }
  std::vector<double> data(n);
  for (auto& x : data) x = std::bit_cast<double>(get_u64(is));
  return DenseTensor(std::move(dims), std::move(data));
}

void save_binary(const std::string& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot open " + path);
  write_binary(os, t);
}

DenseTensor load_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  return read_binary(is);
}

nlohmann::json to_json(const DenseTensor& t) {
  return {{"dims", t.dims()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

DenseTensor from_json(const nlohmann::json& j) {
  try {
    return DenseTensor(j.at("dims").get<std::vector<int64_t>>(),
                       j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, e.what());
  }
}

}  // namespace tendist
