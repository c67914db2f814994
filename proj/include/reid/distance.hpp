#pragma once

#include <map>
#include <span>
#include <string>

#include "reid/matrix.hpp"

namespace reid {

// Per-family fusion weights (the gamma of each metadata family).
struct FusionWeights {
  std::map<std::string, double> gamma;
};

// out[i][j] = sqrt(sum_k (a[i][k] - b[j][k])^2). Each entry accumulates in
// ascending k, so results are bit-identical for any worker count.
Matrix pairwise_euclidean(const Matrix& a, const Matrix& b);

// Elementwise arithmetic mean of equally shaped matrices, accumulated in
// list order.
Matrix average_matrices(std::span<const Matrix> mats);

// out[i][j] = base[i][j] + sum over families of gamma_f * meta_dists[f][i][j].
// Families are applied in name order. Every family present in meta_dists
// must have a weight; extra weights are ignored.
Matrix fuse_metadata(const Matrix& base, const std::map<std::string, Matrix>& meta_dists,
                     const FusionWeights& weights);

}  // namespace reid
