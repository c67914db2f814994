#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/matrix.hpp"

namespace reid {

struct EvalOptions {
  std::optional<std::size_t> top_n;  // truncate each ranking
  bool cross_camera = false;         // drop same-identity same-camera gallery items
};

// Gallery indices of one probe, ascending by distance, ties by index.
struct RankedList {
  std::size_t probe = 0;
  std::vector<std::uint32_t> order;
};

// Sorts the valid gallery entries of one probe row. valid_mask entries are
// 0 (excluded) or nonzero (kept); the order is truncated to top_n when set.
RankedList rank_gallery(std::span<const double> dist_row, const EvalOptions& options,
                        std::span<const std::uint8_t> valid_mask);

// AP = (1/min(|relevant|, |order|)) * sum over hits of hit_count/rank,
// ranks 1-based. `relevant` must already be restricted to the ranked
// universe (masked items removed).
double average_precision(const RankedList& ranked, std::span<const std::uint32_t> relevant);

struct ProbeScore {
  std::size_t row = 0;                // probe row in the distance matrix
  double ap = 0.0;
  std::size_t first_hit_rank = 0;     // 1-based; 0 when no hit in the ranking
};

struct MeanApResult {
  double mean_ap = 0.0;
  std::vector<ProbeScore> probes;     // scored probes, row-ascending
  std::vector<std::size_t> skipped;   // probe rows with no relevant item
};

// Mean over probes of average precision. Rows of `dist` are the manifest's
// query items in order, columns its gallery items in order; every one of
// them needs an identity label. Probes left with no relevant gallery item
// after masking are excluded from the mean and reported in `skipped`.
MeanApResult mean_ap(const Matrix& dist, const ItemManifest& manifest,
                     const EvalOptions& options = {});

// Fraction of scored probes with a correct identity in the top k.
double cmc_at_k(const Matrix& dist, const ItemManifest& manifest, std::size_t k,
                const EvalOptions& options = {});

struct ProbeReport {
  std::string probe_id;
  double ap = 0.0;
  std::size_t first_hit_rank = 0;
};

struct EvalReport {
  std::vector<ProbeReport> probes;
  std::vector<std::string> skipped;   // probe ids with no relevant item
  double mean_ap = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
};

// One pass producing the full report: per-probe AP and first-hit rank plus
// the mAP / Rank@1/5/10 footer.
EvalReport evaluate(const Matrix& dist, const ItemManifest& manifest,
                    const EvalOptions& options = {});

void write_report_text(const EvalReport& report, std::ostream& out);
void write_report_json(const EvalReport& report, std::ostream& out);

}  // namespace reid
