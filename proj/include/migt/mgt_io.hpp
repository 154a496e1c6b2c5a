#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "migt/tensor.hpp"

namespace migt {

// MGT1 layout: "MGT1" magic, u32 LE rank, rank × u32 LE extents, then the
// row-major payload as f64 LE.

std::vector<std::uint8_t> encode_mgt(const Tensor& tensor);
/// Throws FormatError on bad magic, truncated input, or trailing bytes.
Tensor decode_mgt(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_mgt(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_mgt(const std::filesystem::path& path);

}  // namespace migt
