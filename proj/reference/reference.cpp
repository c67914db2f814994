#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reid/error.hpp"

namespace ref {

namespace {

using reid::Matrix;

double euclidean(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double diff = a(i, k) - b(j, k);
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

std::set<std::uint32_t> as_set(const std::vector<std::uint32_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::uint32_t> as_sorted_vector(const std::set<std::uint32_t>& s) {
  return {s.begin(), s.end()};
}

bool contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// valid gallery columns and relevant columns for one probe, following the
// evaluation protocol (cross-camera mask drops same-identity same-camera).
struct ProbeView {
  std::vector<std::uint8_t> valid;
  std::vector<std::uint32_t> relevant;
};

ProbeView probe_view(const reid::ItemManifest& manifest, const reid::ItemRecord& probe,
                     const std::vector<std::size_t>& gallery, bool cross_camera) {
  ProbeView view;
  view.valid.assign(gallery.size(), 1);
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    const reid::ItemRecord& item = manifest[gallery[j]];
    if (!item.identity || !probe.identity) {
      reid::fail(reid::errc::missing_labels, "item without identity label");
    }
    const bool same_identity = *item.identity == *probe.identity;
    if (cross_camera && same_identity && item.camera_id == probe.camera_id) {
      view.valid[j] = 0;
      continue;
    }
    if (same_identity) view.relevant.push_back(static_cast<std::uint32_t>(j));
  }
  return view;
}

std::vector<std::uint32_t> ranked_order(std::span<const double> row,
                                        const std::vector<std::uint8_t>& valid,
                                        const reid::EvalOptions& options) {
  std::vector<std::uint32_t> order;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (valid[j] != 0) order.push_back(static_cast<std::uint32_t>(j));
  }
  std::sort(order.begin(), order.end(), [&row](std::uint32_t a, std::uint32_t b) {
    if (row[a] != row[b]) return row[a] < row[b];
    return a < b;
  });
  if (options.top_n && order.size() > *options.top_n) order.resize(*options.top_n);
  return order;
}

struct ProbeOutcome {
  bool scored = false;
  double ap = 0.0;
  std::size_t first_hit = 0;  // 1-based, 0 = never hit
};

std::vector<ProbeOutcome> score_probes(const Matrix& dist, const reid::ItemManifest& manifest,
                                       const reid::EvalOptions& options) {
  const std::vector<std::size_t> queries = manifest.indices_of(reid::Split::query);
  const std::vector<std::size_t> gallery = manifest.indices_of(reid::Split::gallery);
  if (dist.rows() != queries.size() || dist.cols() != gallery.size()) {
    reid::fail(reid::errc::shape_mismatch, "distance matrix does not match manifest splits");
  }
  std::vector<ProbeOutcome> outcomes(queries.size());
  for (std::size_t r = 0; r < queries.size(); ++r) {
    const ProbeView view =
        probe_view(manifest, manifest[queries[r]], gallery, options.cross_camera);
    if (view.relevant.empty()) continue;
    const std::vector<std::uint32_t> order = ranked_order(dist.row(r), view.valid, options);
    outcomes[r].scored = true;
    outcomes[r].ap = average_precision(order, view.relevant);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (contains(view.relevant, order[pos])) {
        outcomes[r].first_hit = pos + 1;
        break;
      }
    }
  }
  return outcomes;
}

}  // namespace

Matrix pairwise_euclidean(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    reid::fail(reid::errc::dimension_mismatch, "embedding dimensions differ");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = euclidean(a, i, b, j);
    }
  }
  return out;
}

Matrix average_matrices(std::span<const Matrix> mats) {
  if (mats.empty()) reid::fail(reid::errc::empty_list, "no matrices to average");
  Matrix out(mats[0].rows(), mats[0].cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      double sum = 0.0;
      for (const Matrix& m : mats) {
        if (m.rows() != out.rows() || m.cols() != out.cols()) {
          reid::fail(reid::errc::shape_mismatch, "matrix shapes differ");
        }
        sum += m(i, j);
      }
      out(i, j) = sum / static_cast<double>(mats.size());
    }
  }
  return out;
}

Matrix fuse_metadata(const Matrix& base, const std::map<std::string, Matrix>& meta_dists,
                     const reid::FusionWeights& weights) {
  Matrix out = base;
  for (const auto& [family, meta] : meta_dists) {
    const auto it = weights.gamma.find(family);
    if (it == weights.gamma.end()) {
      reid::fail(reid::errc::missing_weight, "family " + family + " has no weight");
    }
    if (meta.rows() != base.rows() || meta.cols() != base.cols()) {
      reid::fail(reid::errc::shape_mismatch, "family " + family + " shape differs from base");
    }
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t j = 0; j < out.cols(); ++j) {
        out(i, j) += it->second * meta(i, j);
      }
    }
  }
  return out;
}

std::vector<std::uint32_t> k_nearest(const Matrix& all_dist, std::size_t owner, std::size_t k) {
  const std::size_t n = all_dist.rows();
  if (k < 1 || k >= n) reid::fail(reid::errc::k_too_large, "k out of range");
  std::vector<std::uint32_t> order;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != owner) order.push_back(static_cast<std::uint32_t>(j));
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (all_dist(owner, a) != all_dist(owner, b)) return all_dist(owner, a) < all_dist(owner, b);
    return a < b;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::uint32_t> k_reciprocal(const Matrix& all_dist, std::size_t owner,
                                        std::size_t k) {
  std::vector<std::uint32_t> members;
  for (std::uint32_t q : ref::k_nearest(all_dist, owner, k)) {
    if (contains(ref::k_nearest(all_dist, q, k), static_cast<std::uint32_t>(owner))) {
      members.push_back(q);
    }
  }
  return members;
}

std::vector<std::uint32_t> expand_reciprocal(const Matrix& all_dist, std::size_t owner,
                                             std::size_t k1) {
  const std::size_t half = (k1 + 1) / 2;
  const std::vector<std::uint32_t> recip = ref::k_reciprocal(all_dist, owner, k1);
  std::set<std::uint32_t> expanded = as_set(recip);
  for (std::uint32_t q : recip) {
    const std::vector<std::uint32_t> half_set = ref::k_reciprocal(all_dist, q, half);
    std::size_t overlap = 0;
    for (std::uint32_t m : half_set) {
      if (contains(recip, m)) ++overlap;
    }
    if (3 * overlap >= 2 * half_set.size()) {
      expanded.insert(half_set.begin(), half_set.end());
    }
  }
  // a unioned half set may name the owner itself; an item is never a member
  // of its own neighbor set
  expanded.erase(static_cast<std::uint32_t>(owner));
  return as_sorted_vector(expanded);
}

double jaccard_distance(const std::vector<std::uint32_t>& a,
                        const std::vector<std::uint32_t>& b) {
  const std::set<std::uint32_t> sa = as_set(a);
  const std::set<std::uint32_t> sb = as_set(b);
  std::size_t inter = 0;
  for (std::uint32_t x : sa) {
    if (sb.count(x) != 0) ++inter;
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  if (uni == 0) return 1.0;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

Matrix rerank(const Matrix& fused, const Matrix& all_dist, const reid::RerankParams& params) {
  const std::size_t q_count = fused.rows();
  const std::size_t n = all_dist.rows();
  if (all_dist.cols() != n || q_count + fused.cols() != n) {
    reid::fail(reid::errc::shape_mismatch, "joint matrix does not cover the fused matrix");
  }

  std::vector<std::vector<std::uint32_t>> rstar(n);
  for (std::size_t i = 0; i < n; ++i) rstar[i] = ref::expand_reciprocal(all_dist, i, params.k1);

  // optional local query expansion: membership averaged over {i} plus the
  // (k2-1)-nearest, weights count/k2
  std::vector<std::map<std::uint32_t, double>> membership;
  if (params.local_expansion) {
    membership.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint32_t> pool = {static_cast<std::uint32_t>(i)};
      if (params.k2 > 1) {
        for (std::uint32_t q : ref::k_nearest(all_dist, i, params.k2 - 1)) pool.push_back(q);
      }
      std::map<std::uint32_t, std::size_t> counts;
      for (std::uint32_t e : pool) {
        for (std::uint32_t m : rstar[e]) ++counts[m];
      }
      for (const auto& [index, count] : counts) {
        membership[i][index] =
            static_cast<double>(count) / static_cast<double>(params.k2);
      }
    }
  }

  Matrix out(q_count, fused.cols());
  for (std::size_t p = 0; p < q_count; ++p) {
    for (std::size_t g = 0; g < fused.cols(); ++g) {
      double dj = 0.0;
      if (!params.local_expansion) {
        dj = jaccard_distance(rstar[p], rstar[q_count + g]);
      } else {
        const auto& mp = membership[p];
        const auto& mg = membership[q_count + g];
        std::set<std::uint32_t> keys;
        for (const auto& [k, v] : mp) keys.insert(k);
        for (const auto& [k, v] : mg) keys.insert(k);
        double sum_min = 0.0;
        double sum_max = 0.0;
        for (std::uint32_t k : keys) {
          const double vp = mp.count(k) != 0 ? mp.at(k) : 0.0;
          const double vg = mg.count(k) != 0 ? mg.at(k) : 0.0;
          sum_min += std::min(vp, vg);
          sum_max += std::max(vp, vg);
        }
        dj = sum_max == 0.0 ? 1.0 : 1.0 - sum_min / sum_max;
      }
      out(p, g) = (1.0 - params.lambda) * dj + params.lambda * fused(p, g);
    }
  }
  return out;
}

Matrix track_average(const Matrix& dist,
                     std::span<const std::optional<std::uint32_t>> tracks) {
  if (tracks.size() != dist.cols()) {
    reid::fail(reid::errc::shape_mismatch, "track list does not match columns");
  }
  Matrix out(dist.rows(), dist.cols());
  for (std::size_t r = 0; r < dist.rows(); ++r) {
    for (std::size_t j = 0; j < dist.cols(); ++j) {
      if (!tracks[j]) {
        out(r, j) = dist(r, j);
        continue;
      }
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t m = 0; m < dist.cols(); ++m) {
        if (tracks[m] && *tracks[m] == *tracks[j]) {
          sum += dist(r, m);
          ++count;
        }
      }
      out(r, j) = sum / static_cast<double>(count);
    }
  }
  return out;
}

double average_precision(const std::vector<std::uint32_t>& order,
                         const std::vector<std::uint32_t>& relevant) {
  if (relevant.empty()) reid::fail(reid::errc::no_relevant, "no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (contains(relevant, order[pos])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
    }
  }
  const std::size_t denom = std::min(relevant.size(), order.size());
  return denom == 0 ? 0.0 : sum / static_cast<double>(denom);
}

reid::MeanApResult mean_ap(const Matrix& dist, const reid::ItemManifest& manifest,
                           const reid::EvalOptions& options) {
  const std::vector<ProbeOutcome> outcomes = score_probes(dist, manifest, options);
  reid::MeanApResult result;
  double sum = 0.0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (outcomes[r].scored) {
      result.probes.push_back({r, outcomes[r].ap, outcomes[r].first_hit});
      sum += outcomes[r].ap;
    } else {
      result.skipped.push_back(r);
    }
  }
  if (result.probes.empty()) {
    reid::fail(reid::errc::no_relevant, "every probe lacks relevant gallery items");
  }
  result.mean_ap = sum / static_cast<double>(result.probes.size());
  return result;
}

double cmc_at_k(const Matrix& dist, const reid::ItemManifest& manifest, std::size_t k,
                const reid::EvalOptions& options) {
  const std::vector<ProbeOutcome> outcomes = score_probes(dist, manifest, options);
  std::size_t scored = 0;
  std::size_t hits = 0;
  for (const ProbeOutcome& o : outcomes) {
    if (!o.scored) continue;
    ++scored;
    if (o.first_hit >= 1 && o.first_hit <= k) ++hits;
  }
  if (scored == 0) reid::fail(reid::errc::no_relevant, "no scored probes");
  return static_cast<double>(hits) / static_cast<double>(scored);
}

std::vector<reid::Triplet> batch_hard_mine(const reid::LabeledBatch& batch) {
  const std::size_t n = batch.embeddings.rows();
  std::vector<reid::Triplet> out;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t hp = n;
    std::size_t hn = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = euclidean(batch.embeddings, a, batch.embeddings, j);
      if (batch.labels[j] == batch.labels[a]) {
        if (hp == n || d > euclidean(batch.embeddings, a, batch.embeddings, hp)) hp = j;
      } else {
        if (hn == n || d < euclidean(batch.embeddings, a, batch.embeddings, hn)) hn = j;
      }
    }
    if (hp == n) reid::fail(reid::errc::singleton_class, "anchor has no positive");
    if (hn == n) reid::fail(reid::errc::single_class, "anchor has no negative");
    out.push_back({a, hp, hn});
  }
  return out;
}

}  // namespace ref
