#include "reid/distance.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "reid/error.hpp"
#include "reid/parallel.hpp"

namespace reid {

Matrix pairwise_euclidean(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    fail(errc::dimension_mismatch, "embedding dims differ: " + std::to_string(a.cols()) +
                                       " vs " + std::to_string(b.cols()));
  }
  const std::size_t dim = a.cols();
  Matrix out(a.rows(), b.rows());

  const auto n = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double* ra = a.data() + static_cast<std::size_t>(i) * dim;
    double* ro = out.data() + static_cast<std::size_t>(i) * b.rows();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* rb = b.data() + j * dim;
      double s = 0.0;
      // ascending-k accumulation keeps entries bit-identical across runs
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = ra[k] - rb[k];
        s += d * d;
      }
      ro[j] = std::sqrt(s);
    }
  }
  return out;
}

Matrix average_matrices(std::span<const Matrix> mats) {
  if (mats.empty()) fail(errc::empty_list, "nothing to average");
  const std::size_t rows = mats[0].rows();
  const std::size_t cols = mats[0].cols();
  for (std::size_t m = 1; m < mats.size(); ++m) {
    if (mats[m].rows() != rows || mats[m].cols() != cols) {
      fail(errc::shape_mismatch, "matrix " + std::to_string(m) + " is " +
                                     std::to_string(mats[m].rows()) + "x" +
                                     std::to_string(mats[m].cols()) + ", expected " +
                                     std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  Matrix out = mats[0];
  const auto total = static_cast<std::int64_t>(out.size());
  for (std::size_t m = 1; m < mats.size(); ++m) {
    const double* src = mats[m].data();
    double* dst = out.data();
#pragma omp parallel for num_threads(max_workers()) schedule(static)
    for (std::int64_t i = 0; i < total; ++i) dst[i] += src[i];
  }
  const double count = static_cast<double>(mats.size());
  double* dst = out.data();
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < total; ++i) dst[i] /= count;
  return out;
}

Matrix fuse_metadata(const Matrix& base, const std::map<std::string, Matrix>& meta_dists,
                     const FusionWeights& weights) {
  for (const auto& [family, m] : meta_dists) {
    if (m.rows() != base.rows() || m.cols() != base.cols()) {
      fail(errc::shape_mismatch, "metadata family '" + family + "' is " +
                                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                     ", base is " + std::to_string(base.rows()) + "x" +
                                     std::to_string(base.cols()));
    }
    if (!weights.gamma.contains(family)) {
      fail(errc::missing_weight, "no gamma for metadata family '" + family + "'");
    }
  }

  Matrix out = base;
  const auto total = static_cast<std::int64_t>(out.size());
  for (const auto& [family, m] : meta_dists) {  // map order fixes the family order
    const double gamma = weights.gamma.at(family);
    const double* src = m.data();
    double* dst = out.data();
#pragma omp parallel for num_threads(max_workers()) schedule(static)
    for (std::int64_t i = 0; i < total; ++i) dst[i] += gamma * src[i];
  }
  return out;
}

}  // namespace reid
