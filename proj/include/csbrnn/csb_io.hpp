#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "csbrnn/csb.hpp"

namespace csbrnn {

// Little-endian layout:
//   "CSB1"
//   u32 rows, cols, block_rows, block_cols, block_count
//   u16 kernel_rows, u16 kernel_cols        per block, row-major
//   u16 row_idx[], u16 col_idx[]
//   f32 val[]
// Values are narrowed to binary32 on write.
std::vector<std::uint8_t> serialize(const CsbMatrix& csb);
CsbMatrix deserialize(std::span<const std::uint8_t> bytes);

void write_csb_file(const std::filesystem::path& path, const CsbMatrix& csb);
CsbMatrix read_csb_file(const std::filesystem::path& path);

}  // namespace csbrnn
