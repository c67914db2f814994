#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/matrix.hpp"

namespace reid {

// A neighbor set over the joint query+gallery index space. Members are kept
// sorted ascending by index; the owner itself is never a member.
struct NeighborSet {
  std::size_t owner = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> members;
};

struct RerankParams {
  std::size_t k1 = 20;  // reciprocal neighborhood size
  std::size_t k2 = 6;   // expansion neighborhood size, used only by local_expansion
  double lambda = 0.3;  // blend weight of the revised original distance
  // Averages set membership over the k2-neighborhood of each item before
  // the Jaccard step. Off by default; k2 = 1 reproduces the plain set form.
  bool local_expansion = false;
};

// The k items closest to `owner` by all_dist, excluding owner itself.
// Ties break by ascending index.
NeighborSet k_nearest(const Matrix& all_dist, std::size_t owner, std::size_t k);

// Mutual restriction: q is a member iff q is k-nearest to owner and owner
// is k-nearest to q.
NeighborSet k_reciprocal(const Matrix& all_dist, std::size_t owner, std::size_t k);

// Robust set R*: the reciprocal set of owner, unioned with the half-size
// reciprocal set of every member whose half-size set overlaps the owner's
// set in at least two thirds of its elements.
NeighborSet expand_reciprocal(const Matrix& all_dist, std::size_t owner, std::size_t k1);

// 1 - |A n B| / |A u B|; defined as 1.0 when both sets are empty.
double jaccard_distance(const NeighborSet& a, const NeighborSet& b);

// Blends Jaccard distances over expanded reciprocal sets with the revised
// original distances: out = (1-lambda) * d_jaccard + lambda * fused.
// `fused` is |Q|x|G|; `all_dist` is square over the joint index space with
// queries first (index i < |Q|) then gallery items (index |Q| + j).
Matrix rerank(const Matrix& fused, const Matrix& all_dist, const RerankParams& params);

// Replaces each probe-row entry by the arithmetic mean of that row over the
// entry's track. Columns without a track id are singleton tracks.
Matrix track_average(const Matrix& dist,
                     std::span<const std::optional<std::uint32_t>> tracks);

// Convenience overload: tracks come from the manifest's gallery items (or
// from all items when the manifest has exactly one record per column).
Matrix track_average(const Matrix& dist, const ItemManifest& manifest);

}  // namespace reid
