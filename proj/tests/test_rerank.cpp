#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "doctest.h"
#include "reference.hpp"
#include "reid/error.hpp"
#include "reid/parallel.hpp"
#include "reid/rerank.hpp"
#include "support.hpp"

using reid::errc;
using reid::Error;
using reid::Matrix;
using reid::NeighborSet;
using reid::RerankParams;

namespace {

// Symmetric zero-diagonal matrix: unspecified off-diagonal entries get
// `fill`, the listed {i, j, d} triples are applied both ways.
struct Link {
  std::size_t i;
  std::size_t j;
  double d;
};

Matrix symmetric_distance(std::size_t n, double fill, const std::vector<Link>& links) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = i == j ? 0.0 : fill;
  for (const Link& l : links) {
    m(l.i, l.j) = l.d;
    m(l.j, l.i) = l.d;
  }
  return m;
}

std::vector<std::uint32_t> members(const NeighborSet& s) { return s.members; }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  return worst;
}

// Two 2-d clusters, queries first: rows 0..1 are one query per cluster,
// rows 2..9 are four gallery points per cluster.
Matrix two_cluster_points() {
  const double pts[10][2] = {
      {0.0, 0.0},   {5.0, 5.0},                                            // queries
      {0.1, 0.0},   {0.0, 0.1},  {0.15, 0.05}, {0.05, 0.15},               // cluster A
      {5.1, 5.0},   {5.0, 5.1},  {5.15, 5.05}, {5.05, 5.15},               // cluster B
  };
  Matrix emb(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    emb(i, 0) = pts[i][0];
    emb(i, 1) = pts[i][1];
  }
  return emb;
}

}  // namespace

TEST_CASE("k_nearest basics") {
  SUBCASE("unique minimum") {
    const Matrix d = symmetric_distance(3, 0.9, {{0, 1, 0.1}});
    const NeighborSet s = reid::k_nearest(d, 0, 1);
    CHECK(members(s) == std::vector<std::uint32_t>{1});
    CHECK(s.owner == 0);
    CHECK(s.k == 1);
  }
  SUBCASE("k = n-1 is everyone but the owner") {
    const Matrix d = testsupport::random_distance_square(17, 9);
    const NeighborSet s = reid::k_nearest(d, 4, 8);
    std::vector<std::uint32_t> expect = {0, 1, 2, 3, 5, 6, 7, 8};
    CHECK(members(s) == expect);
  }
  SUBCASE("ties break by ascending index") {
    Matrix d(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) d(i, j) = i == j ? 0.0 : 0.5;
    const NeighborSet s = reid::k_nearest(d, 0, 2);
    CHECK(members(s) == std::vector<std::uint32_t>{1, 2});
  }
  SUBCASE("matches the full-sort oracle on a seeded instance") {
    const Matrix d = testsupport::random_distance_square(21, 12);
    for (std::size_t owner = 0; owner < 12; ++owner) {
      CHECK(members(reid::k_nearest(d, owner, 4)) == ref::k_nearest(d, owner, 4));
    }
  }
  SUBCASE("k out of range") {
    const Matrix d = testsupport::random_distance_square(3, 5);
    CHECK_THROWS_AS(reid::k_nearest(d, 0, 5), Error);
    CHECK_THROWS_AS(reid::k_nearest(d, 0, 0), Error);
    try {
      reid::k_nearest(d, 0, 9);
    } catch (const Error& e) {
      CHECK(e.code() == errc::k_too_large);
    }
  }
}

TEST_CASE("k_reciprocal membership is mutual") {
  SUBCASE("a mutual pair contains each other") {
    const Matrix d = symmetric_distance(2, 1.0, {{0, 1, 0.2}});
    CHECK(members(reid::k_reciprocal(d, 0, 1)) == std::vector<std::uint32_t>{1});
    CHECK(members(reid::k_reciprocal(d, 1, 1)) == std::vector<std::uint32_t>{0});
  }
  SUBCASE("star topology keeps only the hub's own nearest spoke") {
    // hub 0 is every spoke's nearest; the hub's single nearest is spoke 1
    const Matrix d = symmetric_distance(
        4, 99.0, {{0, 1, 0.1}, {0, 2, 0.2}, {0, 3, 0.3}, {1, 2, 5.0}, {1, 3, 6.0}, {2, 3, 7.0}});
    CHECK(members(reid::k_reciprocal(d, 0, 1)) == std::vector<std::uint32_t>{1});
    CHECK(members(reid::k_reciprocal(d, 2, 1)).empty());
    CHECK(members(reid::k_reciprocal(d, 3, 1)).empty());
  }
  SUBCASE("matches brute-force double membership on a seeded instance") {
    const Matrix d = testsupport::random_distance_square(33, 15);
    for (std::size_t owner = 0; owner < 15; ++owner) {
      CHECK(members(reid::k_reciprocal(d, owner, 5)) == ref::k_reciprocal(d, owner, 5));
    }
  }
  SUBCASE("symmetry against brute force on random instances") {
    for (unsigned seed = 40; seed < 44; ++seed) {
      const std::size_t n = 20 + seed % 11;  // up to 30
      const Matrix d = testsupport::random_distance_square(seed, n);
      const std::size_t k = 4;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ri = members(reid::k_reciprocal(d, i, k));
        for (std::uint32_t q : ri) {
          // q is reciprocal to i exactly when both are in each other's k-nearest
          const auto ni = members(reid::k_nearest(d, i, k));
          const auto nq = members(reid::k_nearest(d, q, k));
          CHECK(std::binary_search(ni.begin(), ni.end(), q));
          CHECK(std::binary_search(nq.begin(), nq.end(), static_cast<std::uint32_t>(i)));
        }
      }
    }
  }
}

TEST_CASE("expand_reciprocal") {
  SUBCASE("no candidate passes the overlap test: R* == R") {
    const Matrix d = symmetric_distance(
        4, 99.0, {{0, 1, 0.1}, {0, 2, 0.2}, {0, 3, 0.3}, {1, 2, 5.0}, {1, 3, 6.0}, {2, 3, 7.0}});
    const auto r = members(reid::k_reciprocal(d, 0, 1));
    const auto rstar = members(reid::expand_reciprocal(d, 0, 1));
    CHECK(rstar == r);
  }
  SUBCASE("4-item clique with k1=2 agrees with the brute-forced rule") {
    // With k1=2 the half sets have size <= 1, and the 2/3 overlap test then
    // only passes for half sets lying entirely inside R — so the rule cannot
    // add anything here and the brute-forced outcome is R* == R.
    Matrix d(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) d(i, j) = i == j ? 0.0 : 1.0;
    for (std::size_t owner = 0; owner < 4; ++owner) {
      const auto fast = members(reid::expand_reciprocal(d, owner, 2));
      const auto slow = ref::expand_reciprocal(d, owner, 2);
      CHECK(fast == slow);
      CHECK(fast == members(reid::k_reciprocal(d, owner, 2)));
    }
  }
  SUBCASE("a passing half set grows R* beyond R") {
    // Designed so R(0,5) = {1,2,3,4,5} and the half set R(1,3) = {2,3,7}
    // overlaps it in 2 of 3 elements, pulling item 7 into R*(0).
    const Matrix d = symmetric_distance(8, 30.0,
                                        {{0, 1, 1.0},
                                         {0, 2, 1.0},
                                         {0, 3, 1.0},
                                         {0, 4, 3.0},
                                         {0, 5, 3.0},
                                         {0, 7, 15.0},
                                         {1, 2, 0.9},
                                         {1, 3, 0.9},
                                         {1, 7, 0.95},
                                         {2, 3, 0.9},
                                         {2, 7, 1.1},
                                         {3, 7, 1.1},
                                         {1, 4, 20.0},
                                         {1, 5, 20.0},
                                         {2, 4, 20.0},
                                         {2, 5, 20.0},
                                         {3, 4, 20.0},
                                         {3, 5, 20.0},
                                         {4, 5, 20.0},
                                         {4, 6, 20.0},
                                         {4, 7, 20.0},
                                         {5, 6, 20.0},
                                         {5, 7, 20.0}});
    const auto r = members(reid::k_reciprocal(d, 0, 5));
    CHECK(r == std::vector<std::uint32_t>{1, 2, 3, 4, 5});
    const auto rstar = members(reid::expand_reciprocal(d, 0, 5));
    CHECK(rstar == ref::expand_reciprocal(d, 0, 5));
    CHECK(rstar == std::vector<std::uint32_t>{1, 2, 3, 4, 5, 7});
    CHECK(std::includes(rstar.begin(), rstar.end(), r.begin(), r.end()));
  }
  SUBCASE("R is always a subset of R*, never containing the owner") {
    for (unsigned seed = 50; seed < 54; ++seed) {
      const Matrix d = testsupport::random_distance_square(seed, 18);
      for (std::size_t owner = 0; owner < 18; ++owner) {
        const auto r = members(reid::k_reciprocal(d, owner, 6));
        const auto rstar = members(reid::expand_reciprocal(d, owner, 6));
        CHECK(std::includes(rstar.begin(), rstar.end(), r.begin(), r.end()));
        CHECK(!std::binary_search(rstar.begin(), rstar.end(),
                                  static_cast<std::uint32_t>(owner)));
        CHECK(rstar == ref::expand_reciprocal(d, owner, 6));
      }
    }
  }
}

TEST_CASE("jaccard distance on neighbor sets") {
  auto make = [](std::vector<std::uint32_t> m) {
    NeighborSet s;
    s.members = std::move(m);
    return s;
  };
  CHECK(reid::jaccard_distance(make({1, 2, 3}), make({1, 2, 3})) == 0.0);
  CHECK(reid::jaccard_distance(make({1, 2}), make({3, 4})) == 1.0);
  CHECK(reid::jaccard_distance(make({1, 2, 3}), make({2, 3, 4})) == doctest::Approx(0.5));
  CHECK(reid::jaccard_distance(make({}), make({})) == 1.0);
  // always within [0,1] on random sets
  for (unsigned seed = 60; seed < 63; ++seed) {
    const Matrix d = testsupport::random_distance_square(seed, 14);
    for (std::size_t i = 0; i + 1 < 14; ++i) {
      const double dj = reid::jaccard_distance(reid::expand_reciprocal(d, i, 4),
                                               reid::expand_reciprocal(d, i + 1, 4));
      CHECK(dj >= 0.0);
      CHECK(dj <= 1.0);
    }
  }
}

TEST_CASE("rerank") {
  const Matrix emb = two_cluster_points();
  const Matrix all_dist = reid::pairwise_euclidean(emb, emb);
  Matrix fused(2, 8);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t g = 0; g < 8; ++g) fused(p, g) = all_dist(p, 2 + g);

  SUBCASE("lambda = 1 returns the fused matrix bitwise") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;
    params.lambda = 1.0;
    const Matrix out = reid::rerank(fused, all_dist, params);
    CHECK(out.bitwise_equal(fused));
  }
  SUBCASE("lambda = 0 yields pure Jaccard distances in [0,1]") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;
    params.lambda = 0.0;
    const Matrix out = reid::rerank(fused, all_dist, params);
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t g = 0; g < 8; ++g) {
        CHECK(out(p, g) >= 0.0);
        CHECK(out(p, g) <= 1.0);
      }
    }
    // same-cluster gallery items should sit strictly closer than cross-cluster
    CHECK(out(0, 0) < out(0, 4));
    CHECK(out(1, 4) < out(1, 0));
  }
  SUBCASE("two-cluster instance matches the from-definition reference") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;
    params.lambda = 0.5;
    const Matrix fast = reid::rerank(fused, all_dist, params);
    const Matrix slow = ref::rerank(fused, all_dist, params);
    CHECK(max_abs_diff(fast, slow) <= 1e-12);
  }
  SUBCASE("local expansion path matches the reference and k2=1 reproduces the set form") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;
    params.lambda = 0.5;
    params.local_expansion = true;
    const Matrix fast = reid::rerank(fused, all_dist, params);
    const Matrix slow = ref::rerank(fused, all_dist, params);
    CHECK(max_abs_diff(fast, slow) <= 1e-12);

    params.k2 = 1;
    const Matrix soft = reid::rerank(fused, all_dist, params);
    params.local_expansion = false;
    const Matrix plain = reid::rerank(fused, all_dist, params);
    CHECK(max_abs_diff(soft, plain) <= 1e-15);
  }
  SUBCASE("worker count never changes the output") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;
    params.lambda = 0.3;
    reid::set_max_workers(1);
    const Matrix serial = reid::rerank(fused, all_dist, params);
    reid::set_max_workers(4);
    const Matrix parallel = reid::rerank(fused, all_dist, params);
    reid::set_max_workers(0);
    CHECK(parallel.bitwise_equal(serial));
  }
  SUBCASE("parameter and shape validation") {
    RerankParams params;
    params.k1 = 4;
    params.k2 = 2;

    Matrix short_joint(9, 9);
    CHECK_THROWS_AS(reid::rerank(fused, short_joint, params), Error);

    RerankParams bad = params;
    bad.lambda = 1.5;
    try {
      reid::rerank(fused, all_dist, bad);
      FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
      CHECK(e.code() == errc::config_invalid);
    }

    bad = params;
    bad.k2 = 9;  // k2 > k1
    try {
      reid::rerank(fused, all_dist, bad);
      FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
      CHECK(e.code() == errc::config_invalid);
    }

    bad = params;
    bad.k1 = 10;  // k1 >= n
    bad.k2 = 2;
    try {
      reid::rerank(fused, all_dist, bad);
      FAIL("expected KTooLarge");
    } catch (const Error& e) {
      CHECK(e.code() == errc::k_too_large);
    }
  }
}

TEST_CASE("track averaging") {
  SUBCASE("one track over two columns averages them") {
    Matrix dist(1, 2);
    dist(0, 0) = 0.2;
    dist(0, 1) = 0.4;
    const std::vector<std::optional<std::uint32_t>> tracks = {7, 7};
    const Matrix out = reid::track_average(dist, tracks);
    CHECK(out(0, 0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(out(0, 0) == out(0, 1));
  }
  SUBCASE("all singletons is the identity bitwise") {
    const Matrix dist = testsupport::random_matrix(70, 5, 9);
    const std::vector<std::optional<std::uint32_t>> tracks(9, std::nullopt);
    const Matrix out = reid::track_average(dist, tracks);
    CHECK(out.bitwise_equal(dist));
  }
  SUBCASE("6x10 with three tracks") {
    const Matrix dist = testsupport::random_matrix(71, 6, 10);
    std::vector<std::optional<std::uint32_t>> tracks(10);
    for (std::size_t j = 0; j < 10; ++j) tracks[j] = static_cast<std::uint32_t>(j % 3);
    const Matrix out = reid::track_average(dist, tracks);

    // row sums preserved
    for (std::size_t r = 0; r < 6; ++r) {
      double before = 0.0;
      double after = 0.0;
      for (std::size_t j = 0; j < 10; ++j) {
        before += dist(r, j);
        after += out(r, j);
      }
      CHECK(std::abs(before - after) <= 1e-12);
    }
    // within-track entries exactly equal
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t j = 0; j < 10; ++j) {
        for (std::size_t j2 = j + 1; j2 < 10; ++j2) {
          if (*tracks[j] == *tracks[j2]) CHECK(out(r, j) == out(r, j2));
        }
      }
    }
    // matches the reference and is idempotent bitwise
    const Matrix slow = ref::track_average(dist, tracks);
    CHECK(max_abs_diff(out, slow) <= 1e-12);
    const Matrix twice = reid::track_average(out, tracks);
    CHECK(twice.bitwise_equal(out));
  }
  SUBCASE("column count must match the track list") {
    const Matrix dist = testsupport::random_matrix(72, 2, 3);
    const std::vector<std::optional<std::uint32_t>> tracks(4, std::nullopt);
    try {
      reid::track_average(dist, tracks);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == errc::shape_mismatch);
    }
  }
  SUBCASE("manifest overload") {
    using reid::Split;
    const Matrix dist = testsupport::random_matrix(73, 2, 4);

    // gallery subset: 1 query + 4 gallery columns
    std::vector<reid::ItemRecord> items = {
        testsupport::item("q", 0, 0, std::nullopt, Split::query),
        testsupport::item("g0", 0, 1, 1, Split::gallery),
        testsupport::item("g1", 0, 1, 1, Split::gallery),
        testsupport::item("g2", 1, 2, std::nullopt, Split::gallery),
        testsupport::item("g3", 1, 2, 2, Split::gallery),
    };
    const reid::ItemManifest manifest(items);
    const Matrix via_manifest = reid::track_average(dist, manifest);

    std::vector<std::optional<std::uint32_t>> tracks = {1, 1, std::nullopt, 2};
    const Matrix via_tracks = reid::track_average(dist, tracks);
    CHECK(via_manifest.bitwise_equal(via_tracks));

    // one record per column: the whole manifest is the column space
    std::vector<reid::ItemRecord> all_gallery(items.begin() + 1, items.end());
    const reid::ItemManifest columns_only(all_gallery);
    CHECK(reid::track_average(dist, columns_only).bitwise_equal(via_tracks));

    // neither all items nor the gallery match the column count
    std::vector<reid::ItemRecord> off = {
        testsupport::item("q", 0, 0, std::nullopt, Split::query),
        testsupport::item("g0", 0, 1, 1, Split::gallery),
    };
    const reid::ItemManifest wrong(off);
    try {
      reid::track_average(dist, wrong);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == errc::shape_mismatch);
    }
  }
}
