#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "tendist/tensor_ir.hpp"

namespace tendist {

// Binary layout: u64 order, u64 dims[order], f64 data[volume], all little-endian.
void write_binary(std::ostream& os, const DenseTensor& t);
DenseTensor read_binary(std::istream& is);
void save_binary(const std::string& path, const DenseTensor& t);
DenseTensor load_binary(const std::string& path);

// JSON layout: {"dims": [...], "data": [...]}.
nlohmann::json to_json(const DenseTensor& t);
DenseTensor from_json(const nlohmann::json& j);

}  // namespace tendist
