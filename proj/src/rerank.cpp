#include "reid/rerank.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include "reid/error.hpp"
#include "reid/parallel.hpp"

namespace reid {

namespace {

void require_square(const Matrix& all_dist) {
  if (all_dist.rows() != all_dist.cols() || all_dist.rows() == 0) {
    fail(errc::shape_mismatch, "joint distance matrix must be square, got " +
                                   std::to_string(all_dist.rows()) + "x" +
                                   std::to_string(all_dist.cols()));
  }
}

void require_k(std::size_t k, std::size_t n) {
  if (k < 1 || k >= n) {
    fail(errc::k_too_large,
         "k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n - 1) + "]");
  }
}

void require_owner(std::size_t owner, std::size_t n) {
  if (owner >= n) {
    fail(errc::config_invalid, "owner index " + std::to_string(owner) + " out of range, n=" +
                                   std::to_string(n));
  }
}

// Indices of the k nearest items to `owner` (self excluded), ordered by
// (distance, index).
std::vector<std::uint32_t> nearest_prefix(const Matrix& d, std::size_t owner, std::size_t k) {
  const std::size_t n = d.rows();
  std::vector<std::uint32_t> cand;
  cand.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != owner) cand.push_back(static_cast<std::uint32_t>(j));
  }
  const double* row = d.data() + owner * n;
  auto closer = [row](std::uint32_t a, std::uint32_t b) {
    if (row[a] != row[b]) return row[a] < row[b];
    return a < b;
  };
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                    closer);
  cand.resize(k);
  return cand;
}

std::vector<std::uint32_t> sorted_members(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t intersection_size(const std::vector<std::uint32_t>& a,
                              const std::vector<std::uint32_t>& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

double set_jaccard(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 1.0;  // both empty: maximally dissimilar
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

// Neighbor-list cache for the batched rerank: the k1-nearest prefix of every
// item plus an index->rank lookup over those prefixes.
struct NeighborCache {
  std::size_t k1 = 0;
  std::vector<std::vector<std::uint32_t>> prefix;             // per item, (distance, index) order
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rank;  // sorted by index

  // True when `j` sits among the first `h` nearest of `i`.
  bool within(std::size_t i, std::uint32_t j, std::size_t h) const {
    const auto& r = rank[i];
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const auto& p, std::uint32_t key) { return p.first < key; });
    return it != r.end() && it->first == j && it->second < h;
  }
};

NeighborCache build_neighbor_cache(const Matrix& d, std::size_t k1) {
  const std::size_t n = d.rows();
  NeighborCache cache;
  cache.k1 = k1;
  cache.prefix.resize(n);
  cache.rank.resize(n);
  const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    auto& pref = cache.prefix[i];
    pref = nearest_prefix(d, static_cast<std::size_t>(i), k1);
    auto& rk = cache.rank[i];
    rk.reserve(k1);
    for (std::uint32_t r = 0; r < pref.size(); ++r) rk.emplace_back(pref[r], r);
    std::sort(rk.begin(), rk.end());
  }
  return cache;
}

// Reciprocal members of `i` at neighborhood size h (h <= k1): mutual
// membership in each other's h-nearest prefix. Sorted ascending.
std::vector<std::uint32_t> reciprocal_at(const NeighborCache& cache, std::size_t i,
                                         std::size_t h) {
  std::vector<std::uint32_t> out;
  const auto& pref = cache.prefix[i];
  for (std::size_t r = 0; r < h && r < pref.size(); ++r) {
    const std::uint32_t q = pref[r];
    if (cache.within(q, static_cast<std::uint32_t>(i), h)) out.push_back(q);
  }
  return sorted_members(std::move(out));
}

std::vector<std::uint32_t> expand_from(std::uint32_t owner,
                                       const std::vector<std::uint32_t>& recip,
                                       const std::vector<std::vector<std::uint32_t>>& half_sets) {
  std::vector<std::uint32_t> out = recip;
  for (std::uint32_t q : recip) {
    const auto& half = half_sets[q];
    // overlap test 3*|half n R| >= 2*|half|, kept in integers
    if (3 * intersection_size(half, recip) >= 2 * half.size()) {
      out.insert(out.end(), half.begin(), half.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  // a unioned half set may name the owner itself; an item is never a member
  // of its own neighbor set
  out.erase(std::remove(out.begin(), out.end(), owner), out.end());
  return out;
}

// Membership vector averaged over the k2-neighborhood {i} u (k2-1 nearest),
// as sorted (index, weight) pairs.
std::vector<std::pair<std::uint32_t, double>> averaged_membership(
    const NeighborCache& cache, const std::vector<std::vector<std::uint32_t>>& rstar,
    std::size_t i, std::size_t k2) {
  std::vector<std::uint32_t> pooled;
  pooled.insert(pooled.end(), rstar[i].begin(), rstar[i].end());
  const auto& pref = cache.prefix[i];
  for (std::size_t r = 0; r + 1 < k2 && r < pref.size(); ++r) {
    const auto& s = rstar[pref[r]];
    pooled.insert(pooled.end(), s.begin(), s.end());
  }
  std::sort(pooled.begin(), pooled.end());

  std::vector<std::pair<std::uint32_t, double>> out;
  const double denom = static_cast<double>(k2);
  for (std::size_t p = 0; p < pooled.size();) {
    std::size_t q = p;
    while (q < pooled.size() && pooled[q] == pooled[p]) ++q;
    out.emplace_back(pooled[p], static_cast<double>(q - p) / denom);
    p = q;
  }
  return out;
}

// Generalized Jaccard over sparse nonnegative membership vectors:
// 1 - sum(min) / sum(max), accumulated in ascending index order.
double soft_jaccard(const std::vector<std::pair<std::uint32_t, double>>& a,
                    const std::vector<std::pair<std::uint32_t, double>>& b) {
  double sum_min = 0.0;
  double sum_max = 0.0;
  std::size_t ia = 0;
  std::size_t ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia].first < b[ib].first) {
      sum_max += a[ia].second;
      ++ia;
    } else if (b[ib].first < a[ia].first) {
      sum_max += b[ib].second;
      ++ib;
    } else {
      sum_min += std::min(a[ia].second, b[ib].second);
      sum_max += std::max(a[ia].second, b[ib].second);
      ++ia;
      ++ib;
    }
  }
  for (; ia < a.size(); ++ia) sum_max += a[ia].second;
  for (; ib < b.size(); ++ib) sum_max += b[ib].second;
  if (sum_max == 0.0) return 1.0;
  return 1.0 - sum_min / sum_max;
}

}  // namespace

NeighborSet k_nearest(const Matrix& all_dist, std::size_t owner, std::size_t k) {
  require_square(all_dist);
  require_owner(owner, all_dist.rows());
  require_k(k, all_dist.rows());
  NeighborSet set;
  set.owner = owner;
  set.k = k;
  set.members = sorted_members(nearest_prefix(all_dist, owner, k));
  return set;
}

NeighborSet k_reciprocal(const Matrix& all_dist, std::size_t owner, std::size_t k) {
  require_square(all_dist);
  require_owner(owner, all_dist.rows());
  require_k(k, all_dist.rows());

  const auto mine = nearest_prefix(all_dist, owner, k);
  std::vector<std::uint32_t> members;
  for (std::uint32_t q : mine) {
    const auto theirs = nearest_prefix(all_dist, q, k);
    if (std::find(theirs.begin(), theirs.end(), static_cast<std::uint32_t>(owner)) !=
        theirs.end()) {
      members.push_back(q);
    }
  }
  NeighborSet set;
  set.owner = owner;
  set.k = k;
  set.members = sorted_members(std::move(members));
  return set;
}

NeighborSet expand_reciprocal(const Matrix& all_dist, std::size_t owner, std::size_t k1) {
  require_square(all_dist);
  require_owner(owner, all_dist.rows());
  require_k(k1, all_dist.rows());

  const std::size_t half = (k1 + 1) / 2;
  const NeighborSet recip = k_reciprocal(all_dist, owner, k1);

  std::vector<std::uint32_t> members = recip.members;
  for (std::uint32_t q : recip.members) {
    const NeighborSet half_set = k_reciprocal(all_dist, q, half);
    if (3 * intersection_size(half_set.members, recip.members) >=
        2 * half_set.members.size()) {
      members.insert(members.end(), half_set.members.begin(), half_set.members.end());
    }
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  // a unioned half set may name the owner itself; an item is never a member
  // of its own neighbor set
  members.erase(std::remove(members.begin(), members.end(), static_cast<std::uint32_t>(owner)),
                members.end());

  NeighborSet set;
  set.owner = owner;
  set.k = k1;
  set.members = std::move(members);
  return set;
}

double jaccard_distance(const NeighborSet& a, const NeighborSet& b) {
  return set_jaccard(a.members, b.members);
}

Matrix rerank(const Matrix& fused, const Matrix& all_dist, const RerankParams& params) {
  const std::size_t q_count = fused.rows();
  const std::size_t g_count = fused.cols();
  const std::size_t n = q_count + g_count;
  require_square(all_dist);
  if (all_dist.rows() != n) {
    fail(errc::shape_mismatch, "joint matrix is " + std::to_string(all_dist.rows()) +
                                   "x" + std::to_string(all_dist.cols()) + " but |Q|+|G| = " +
                                   std::to_string(n));
  }
  if (!(params.lambda >= 0.0 && params.lambda <= 1.0)) {
    fail(errc::config_invalid, "lambda must lie in [0,1]");
  }
  if (params.k2 < 1 || params.k2 > params.k1) {
    fail(errc::config_invalid, "need 1 <= k2 <= k1, got k1=" + std::to_string(params.k1) +
                                   " k2=" + std::to_string(params.k2));
  }
  require_k(params.k1, n);

  const NeighborCache cache = build_neighbor_cache(all_dist, params.k1);
  const std::size_t half = (params.k1 + 1) / 2;

  std::vector<std::vector<std::uint32_t>> recip(n);
  std::vector<std::vector<std::uint32_t>> recip_half(n);
  const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    recip[i] = reciprocal_at(cache, static_cast<std::size_t>(i), params.k1);
    recip_half[i] = reciprocal_at(cache, static_cast<std::size_t>(i), half);
  }

  std::vector<std::vector<std::uint32_t>> rstar(n);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    rstar[i] = expand_from(static_cast<std::uint32_t>(i), recip[i], recip_half);
  }

  const double lambda = params.lambda;
  Matrix out(q_count, g_count);

  if (!params.local_expansion) {
    const auto qn = static_cast<std::int64_t>(q_count);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
    for (std::int64_t p = 0; p < qn; ++p) {
      for (std::size_t j = 0; j < g_count; ++j) {
        const double dj = set_jaccard(rstar[p], rstar[q_count + j]);
        out(static_cast<std::size_t>(p), j) =
            (1.0 - lambda) * dj + lambda * fused(static_cast<std::size_t>(p), j);
      }
    }
    return out;
  }

  std::vector<std::vector<std::pair<std::uint32_t, double>>> membership(n);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    membership[i] = averaged_membership(cache, rstar, static_cast<std::size_t>(i), params.k2);
  }

  const auto qn = static_cast<std::int64_t>(q_count);
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t p = 0; p < qn; ++p) {
    for (std::size_t j = 0; j < g_count; ++j) {
      const double dj = soft_jaccard(membership[p], membership[q_count + j]);
      out(static_cast<std::size_t>(p), j) =
          (1.0 - lambda) * dj + lambda * fused(static_cast<std::size_t>(p), j);
    }
  }
  return out;
}

Matrix track_average(const Matrix& dist,
                     std::span<const std::optional<std::uint32_t>> tracks) {
  if (tracks.size() != dist.cols()) {
    fail(errc::shape_mismatch, "have " + std::to_string(tracks.size()) + " track ids for " +
                                   std::to_string(dist.cols()) + " gallery columns");
  }

  // Column groups: tracked columns grouped by id, untracked ones singletons.
  std::map<std::uint32_t, std::vector<std::size_t>> by_track;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < tracks.size(); ++j) {
    if (tracks[j]) {
      by_track[*tracks[j]].push_back(j);
    } else {
      groups.push_back({j});
    }
  }
  for (auto& [track, cols] : by_track) groups.push_back(std::move(cols));

  Matrix out(dist.rows(), dist.cols());
  const auto rows = static_cast<std::int64_t>(dist.rows());
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = dist.data() + static_cast<std::size_t>(r) * dist.cols();
    double* dst = out.data() + static_cast<std::size_t>(r) * dist.cols();
    for (const auto& group : groups) {
      bool all_equal = true;
      const double first = src[group.front()];
      for (std::size_t j : group) {
        if (src[j] != first) {
          all_equal = false;
          break;
        }
      }
      // a group of equal values averages to that value exactly, which also
      // makes the operation idempotent bit-for-bit
      double mean = first;
      if (!all_equal) {
        double sum = 0.0;
        for (std::size_t j : group) sum += src[j];
        mean = sum / static_cast<double>(group.size());
      }
      for (std::size_t j : group) dst[j] = mean;
    }
  }
  return out;
}

Matrix track_average(const Matrix& dist, const ItemManifest& manifest) {
  std::vector<std::optional<std::uint32_t>> tracks;
  if (manifest.size() == dist.cols()) {
    tracks.reserve(manifest.size());
    for (const ItemRecord& item : manifest.items()) tracks.push_back(item.track_id);
  } else {
    const auto gallery = manifest.indices_of(Split::gallery);
    if (gallery.size() != dist.cols()) {
      fail(errc::shape_mismatch, "manifest matches neither all columns (" +
                                     std::to_string(manifest.size()) + " items) nor its gallery (" +
                                     std::to_string(gallery.size()) + " items) against " +
                                     std::to_string(dist.cols()) + " columns");
    }
    tracks.reserve(gallery.size());
    for (std::size_t i : gallery) tracks.push_back(manifest[i].track_id);
  }
  return track_average(dist, tracks);
}

}  // namespace reid
