// Benchmarks of the OpenMP kernels against their serial reference
// implementations on one mid-sized workload each. Run with
//   build/bench/reid_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "reference.hpp"
#include "reid/distance.hpp"
#include "reid/eval.hpp"
#include "reid/manifest.hpp"
#include "reid/matrix.hpp"
#include "reid/parallel.hpp"
#include "reid/rerank.hpp"
#include "reid/rng.hpp"

namespace {

reid::Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  reid::Rng rng(seed);
  reid::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// One shared workload: 40 probes against 200 gallery items, embeddings in
// 32 dimensions, gallery tracks of length 4.
struct Workload {
  reid::Matrix query_points = random_matrix(1, 40, 32);
  reid::Matrix gallery_points = random_matrix(2, 200, 32);
  reid::Matrix joint_points;
  reid::Matrix qg;
  reid::Matrix joint;
  std::vector<std::optional<std::uint32_t>> tracks;
  reid::ItemManifest manifest;

  Workload() {
    joint_points = reid::Matrix(240, 32);
    for (std::size_t i = 0; i < query_points.size(); ++i) {
      joint_points.data()[i] = query_points.data()[i];
    }
    for (std::size_t i = 0; i < gallery_points.size(); ++i) {
      joint_points.data()[query_points.size() + i] = gallery_points.data()[i];
    }
    qg = reid::pairwise_euclidean(query_points, gallery_points);
    joint = reid::pairwise_euclidean(joint_points, joint_points);

    tracks.resize(200);
    std::vector<reid::ItemRecord> items;
    for (std::size_t i = 0; i < 40; ++i) {
      items.push_back({"q" + std::to_string(i), static_cast<std::uint32_t>(i % 20),
                       static_cast<std::uint32_t>(i % 3), std::nullopt, reid::Split::query});
    }
    for (std::size_t j = 0; j < 200; ++j) {
      tracks[j] = static_cast<std::uint32_t>(j / 4);
      items.push_back({"g" + std::to_string(j), static_cast<std::uint32_t>(j % 20),
                       static_cast<std::uint32_t>(j % 3), tracks[j], reid::Split::gallery});
    }
    manifest = reid::ItemManifest(std::move(items));
  }
};

const Workload& workload() {
  static const Workload w;
  return w;
}

void pairwise_reference(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ref::pairwise_euclidean(w.joint_points, w.joint_points));
  }
}
BENCHMARK(pairwise_reference)->Unit(benchmark::kMillisecond);

void pairwise_openmp(benchmark::State& state) {
  const Workload& w = workload();
  reid::set_max_workers(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reid::pairwise_euclidean(w.joint_points, w.joint_points));
  }
  reid::set_max_workers(0);
}
BENCHMARK(pairwise_openmp)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void rerank_reference(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ref::rerank(w.qg, w.joint, reid::RerankParams{}));
  }
}
BENCHMARK(rerank_reference)->Unit(benchmark::kMillisecond);

void rerank_openmp(benchmark::State& state) {
  const Workload& w = workload();
  reid::set_max_workers(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reid::rerank(w.qg, w.joint, reid::RerankParams{}));
  }
  reid::set_max_workers(0);
}
BENCHMARK(rerank_openmp)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void track_average_reference(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ref::track_average(w.qg, w.tracks));
  }
}
BENCHMARK(track_average_reference)->Unit(benchmark::kMicrosecond);

void track_average_openmp(benchmark::State& state) {
  const Workload& w = workload();
  reid::set_max_workers(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reid::track_average(w.qg, w.tracks));
  }
  reid::set_max_workers(0);
}
BENCHMARK(track_average_openmp)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void mean_ap_reference(benchmark::State& state) {
  const Workload& w = workload();
  for (auto _ : state) {
    benchmark::DoNotOptimize(ref::mean_ap(w.qg, w.manifest));
  }
}
BENCHMARK(mean_ap_reference)->Unit(benchmark::kMicrosecond);

void mean_ap_openmp(benchmark::State& state) {
  const Workload& w = workload();
  reid::set_max_workers(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reid::mean_ap(w.qg, w.manifest));
  }
  reid::set_max_workers(0);
}
BENCHMARK(mean_ap_openmp)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
