#include "reid/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "reid/error.hpp"

namespace reid {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'E', 'I', 'D'};

void put_u32_le(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

void put_u64_le(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

constexpr bool kNativeLittle = std::endian::native == std::endian::little;

}  // namespace

Matrix load_matrix(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    fail(errc::missing_file, "no such file: " + path.string());
  }
  const auto file_bytes = std::filesystem::file_size(path, ec);
  if (ec) fail(errc::io_failure, "cannot stat " + path.string() + ": " + ec.message());

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path.string());

  if (file_bytes < kMatrixHeaderBytes) {
    fail(errc::shape_mismatch,
         path.string() + ": truncated header (" + std::to_string(file_bytes) + " of " +
             std::to_string(kMatrixHeaderBytes) + " bytes)");
  }
  unsigned char header[kMatrixHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kMatrixHeaderBytes);
  if (!in) fail(errc::io_failure, "read failed on " + path.string());

  if (std::memcmp(header, kMagic.data(), 4) != 0) {
    fail(errc::bad_magic, path.string() + ": bad magic, not a matrix file");
  }
  const std::uint32_t version = get_u32_le(header + 4);
  if (version != kMatrixFormatVersion) {
    fail(errc::bad_magic,
         path.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u64_le(header + 8);
  const std::uint64_t cols = get_u64_le(header + 16);
  if (rows == 0 || cols == 0) {
    fail(errc::shape_mismatch, path.string() + ": header declares an empty matrix");
  }
  if (cols > (UINT64_MAX / 8) / rows) {
    fail(errc::shape_mismatch, path.string() + ": declared size overflows");
  }
  const std::uint64_t payload_bytes = rows * cols * 8;
  if (file_bytes != kMatrixHeaderBytes + payload_bytes) {
    fail(errc::shape_mismatch,
         path.string() + ": header declares " + std::to_string(rows) + "x" +
             std::to_string(cols) + " (" + std::to_string(payload_bytes) +
             " payload bytes) but file holds " +
             std::to_string(file_bytes - kMatrixHeaderBytes));
  }

  Matrix m(rows, cols);
  if constexpr (kNativeLittle) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(payload_bytes));
    if (!in) fail(errc::io_failure, "read failed on " + path.string());
  } else {
    std::vector<unsigned char> buf(payload_bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload_bytes));
    if (!in) fail(errc::io_failure, "read failed on " + path.string());
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.data()[i] = std::bit_cast<double>(get_u64_le(buf.data() + i * 8));
    }
  }

  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      fail(errc::non_finite_value,
           path.string() + ": non-finite value at row " + std::to_string(i / cols) +
               " col " + std::to_string(i % cols));
    }
  }
  return m;
}

void save_matrix(const Matrix& matrix, const std::filesystem::path& path) {
  if (matrix.rows() == 0 || matrix.cols() == 0) {
    fail(errc::shape_mismatch, "refusing to save an empty matrix");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_failure, "cannot open " + path.string() + " for writing");

  unsigned char header[kMatrixHeaderBytes] = {};
  std::memcpy(header, kMagic.data(), 4);
  put_u32_le(header + 4, kMatrixFormatVersion);
  put_u64_le(header + 8, matrix.rows());
  put_u64_le(header + 16, matrix.cols());
  out.write(reinterpret_cast<const char*>(header), kMatrixHeaderBytes);

  if constexpr (kNativeLittle) {
    out.write(reinterpret_cast<const char*>(matrix.data()),
              static_cast<std::streamsize>(matrix.size() * sizeof(double)));
  } else {
    std::vector<unsigned char> buf(matrix.size() * 8);
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      put_u64_le(buf.data() + i * 8, std::bit_cast<std::uint64_t>(matrix.data()[i]));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
  out.flush();
  if (!out) fail(errc::io_failure, "write failed on " + path.string());
}

}  // namespace reid
