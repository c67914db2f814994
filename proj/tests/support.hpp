#pragma once

// Shared helpers for the test binaries: seeded random inputs and
// self-cleaning temp directories.

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/matrix.hpp"
#include "reid/rng.hpp"

namespace testsupport {

inline reid::Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols,
                                  double scale = 1.0) {
  reid::Rng rng(seed);
  reid::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// A symmetric zero-diagonal distance matrix (true Euclidean geometry) over n
// items, as re-ranking input.
inline reid::Matrix random_distance_square(std::uint64_t seed, std::size_t n,
                                           std::size_t dim = 6) {
  const reid::Matrix emb = random_matrix(seed, n, dim);
  reid::Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = emb(i, k) - emb(j, k);
        sum += diff * diff;
      }
      out(i, j) = std::sqrt(sum);
    }
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<std::uint64_t> counter{0};
    const std::uint64_t id = counter.fetch_add(1);
    path = std::filesystem::temp_directory_path() /
           ("reid-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(id));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline reid::ItemRecord item(std::string id, std::uint32_t identity, std::uint32_t camera,
                             std::optional<std::uint32_t> track, reid::Split split) {
  return {std::move(id), identity, camera, track, split};
}

}  // namespace testsupport
