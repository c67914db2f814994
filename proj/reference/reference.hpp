#pragma once

// Serial from-definition implementations of the library's kernels, written
// directly against the documented formulas. They exist to check the
// optimized OpenMP code paths and are linked only by tests, the benchmark
// harness, and the CLI's gradient-check command.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reid/distance.hpp"
#include "reid/eval.hpp"
#include "reid/losses.hpp"
#include "reid/manifest.hpp"
#include "reid/matrix.hpp"
#include "reid/rerank.hpp"

namespace ref {

reid::Matrix pairwise_euclidean(const reid::Matrix& a, const reid::Matrix& b);
reid::Matrix average_matrices(std::span<const reid::Matrix> mats);
reid::Matrix fuse_metadata(const reid::Matrix& base,
                           const std::map<std::string, reid::Matrix>& meta_dists,
                           const reid::FusionWeights& weights);

std::vector<std::uint32_t> k_nearest(const reid::Matrix& all_dist, std::size_t owner,
                                     std::size_t k);
std::vector<std::uint32_t> k_reciprocal(const reid::Matrix& all_dist, std::size_t owner,
                                        std::size_t k);
std::vector<std::uint32_t> expand_reciprocal(const reid::Matrix& all_dist, std::size_t owner,
                                             std::size_t k1);
double jaccard_distance(const std::vector<std::uint32_t>& a,
                        const std::vector<std::uint32_t>& b);
reid::Matrix rerank(const reid::Matrix& fused, const reid::Matrix& all_dist,
                    const reid::RerankParams& params);
reid::Matrix track_average(const reid::Matrix& dist,
                           std::span<const std::optional<std::uint32_t>> tracks);

double average_precision(const std::vector<std::uint32_t>& order,
                         const std::vector<std::uint32_t>& relevant);
reid::MeanApResult mean_ap(const reid::Matrix& dist, const reid::ItemManifest& manifest,
                           const reid::EvalOptions& options = {});
double cmc_at_k(const reid::Matrix& dist, const reid::ItemManifest& manifest, std::size_t k,
                const reid::EvalOptions& options = {});

std::vector<reid::Triplet> batch_hard_mine(const reid::LabeledBatch& batch);

}  // namespace ref
