#pragma once

#include <cstdint>
#include <filesystem>

#include "reid/matrix.hpp"

namespace reid {

// Binary matrix container, all fields little-endian:
//   bytes  0..3    magic "REID"
//   bytes  4..7    format version, u32 (currently 1)
//   bytes  8..15   rows, u64
//   bytes 16..23   cols, u64
//   bytes 24..27   reserved, zero on write, ignored on read
//   payload        rows*cols IEEE-754 binary64, row-major
inline constexpr std::uint32_t kMatrixFormatVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 28;

// Rejects truncated or oversized payloads, wrong magic, unsupported
// versions, and non-finite values (reporting the first offending cell).
Matrix load_matrix(const std::filesystem::path& path);

void save_matrix(const Matrix& matrix, const std::filesystem::path& path);

}  // namespace reid
