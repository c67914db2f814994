#include "reid/eval.hpp"

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <string>

#include "json.hpp"
#include "reid/error.hpp"
#include "reid/parallel.hpp"

namespace reid {

namespace {

void require_top_n(const EvalOptions& options) {
  if (options.top_n && *options.top_n < 1) {
    fail(errc::config_invalid, "top_n must be positive when set");
  }
}

struct ProbeOutcome {
  bool scored = false;
  double ap = 0.0;
  std::size_t first_hit_rank = 0;
};

// Per-probe scores plus the rows that had no relevant gallery item. Shared
// by mean_ap, cmc_at_k and evaluate so masking and ranking happen once.
struct EvalCore {
  std::vector<std::size_t> queries;  // manifest indices, row order
  std::vector<ProbeScore> probes;
  std::vector<std::size_t> skipped;
};

EvalCore run_eval(const Matrix& dist, const ItemManifest& manifest,
                  const EvalOptions& options) {
  require_top_n(options);
  const std::vector<std::size_t> queries = manifest.indices_of(Split::query);
  const std::vector<std::size_t> gallery = manifest.indices_of(Split::gallery);
  if (dist.rows() != queries.size() || dist.cols() != gallery.size()) {
    fail(errc::shape_mismatch, "distance matrix is " + std::to_string(dist.rows()) + "x" +
                                   std::to_string(dist.cols()) + " but manifest has " +
                                   std::to_string(queries.size()) + " queries and " +
                                   std::to_string(gallery.size()) + " gallery items");
  }
  for (std::size_t i : queries) {
    if (!manifest[i].identity) {
      fail(errc::missing_labels, "query image " + manifest[i].image_id + " has no identity");
    }
  }
  for (std::size_t i : gallery) {
    if (!manifest[i].identity) {
      fail(errc::missing_labels, "gallery image " + manifest[i].image_id + " has no identity");
    }
  }

  const std::size_t g_count = gallery.size();
  std::vector<ProbeOutcome> outcomes(queries.size());
  const auto q_count = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for num_threads(max_workers()) schedule(static)
  for (std::int64_t r = 0; r < q_count; ++r) {
    const ItemRecord& probe = manifest[queries[static_cast<std::size_t>(r)]];
    std::vector<std::uint8_t> valid(g_count, 1);
    std::vector<std::uint32_t> relevant;
    for (std::size_t j = 0; j < g_count; ++j) {
      const ItemRecord& item = manifest[gallery[j]];
      const bool same_identity = *item.identity == *probe.identity;
      if (options.cross_camera && same_identity && item.camera_id == probe.camera_id) {
        valid[j] = 0;
        continue;
      }
      if (same_identity) relevant.push_back(static_cast<std::uint32_t>(j));
    }
    if (relevant.empty()) continue;  // reported as skipped below

    const RankedList ranked = rank_gallery(dist.row(static_cast<std::size_t>(r)), options, valid);
    ProbeOutcome& res = outcomes[static_cast<std::size_t>(r)];
    res.scored = true;
    res.ap = average_precision(ranked, relevant);
    for (std::size_t pos = 0; pos < ranked.order.size(); ++pos) {
      if (std::binary_search(relevant.begin(), relevant.end(), ranked.order[pos])) {
        res.first_hit_rank = pos + 1;
        break;
      }
    }
  }

  EvalCore core;
  core.queries = queries;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (outcomes[r].scored) {
      core.probes.push_back({r, outcomes[r].ap, outcomes[r].first_hit_rank});
    } else {
      core.skipped.push_back(r);
    }
  }
  if (core.probes.empty()) {
    fail(errc::no_relevant, "no probe has a relevant gallery item under the mask");
  }
  return core;
}

double mean_of_aps(const std::vector<ProbeScore>& probes) {
  double sum = 0.0;
  for (const ProbeScore& p : probes) sum += p.ap;
  return sum / static_cast<double>(probes.size());
}

double hit_fraction(const std::vector<ProbeScore>& probes, std::size_t k) {
  std::size_t hits = 0;
  for (const ProbeScore& p : probes) {
    if (p.first_hit_rank >= 1 && p.first_hit_rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

}  // namespace

RankedList rank_gallery(std::span<const double> dist_row, const EvalOptions& options,
                        std::span<const std::uint8_t> valid_mask) {
  require_top_n(options);
  if (!valid_mask.empty() && valid_mask.size() != dist_row.size()) {
    fail(errc::length_mismatch, "mask length " + std::to_string(valid_mask.size()) +
                                    " vs row length " + std::to_string(dist_row.size()));
  }

  RankedList ranked;
  ranked.order.reserve(dist_row.size());
  for (std::size_t j = 0; j < dist_row.size(); ++j) {
    if (valid_mask.empty() || valid_mask[j] != 0) {
      ranked.order.push_back(static_cast<std::uint32_t>(j));
    }
  }
  std::stable_sort(ranked.order.begin(), ranked.order.end(),
                   [&dist_row](std::uint32_t a, std::uint32_t b) {
                     if (dist_row[a] != dist_row[b]) return dist_row[a] < dist_row[b];
                     return a < b;
                   });
  if (options.top_n && ranked.order.size() > *options.top_n) {
    ranked.order.resize(*options.top_n);
  }
  return ranked;
}

double average_precision(const RankedList& ranked, std::span<const std::uint32_t> relevant) {
  if (relevant.empty()) {
    fail(errc::no_relevant, "probe has no relevant gallery items");
  }
  std::vector<std::uint32_t> wanted(relevant.begin(), relevant.end());
  std::sort(wanted.begin(), wanted.end());

  double sum = 0.0;
  std::size_t hit_count = 0;
  for (std::size_t pos = 0; pos < ranked.order.size(); ++pos) {
    if (std::binary_search(wanted.begin(), wanted.end(), ranked.order[pos])) {
      ++hit_count;
      sum += static_cast<double>(hit_count) / static_cast<double>(pos + 1);
    }
  }
  const std::size_t denom = std::min(wanted.size(), ranked.order.size());
  if (denom == 0) return 0.0;
  return sum / static_cast<double>(denom);
}

MeanApResult mean_ap(const Matrix& dist, const ItemManifest& manifest,
                     const EvalOptions& options) {
  EvalCore core = run_eval(dist, manifest, options);
  MeanApResult result;
  result.mean_ap = mean_of_aps(core.probes);
  result.probes = std::move(core.probes);
  result.skipped = std::move(core.skipped);
  return result;
}

double cmc_at_k(const Matrix& dist, const ItemManifest& manifest, std::size_t k,
                const EvalOptions& options) {
  if (k < 1) {
    fail(errc::config_invalid, "k must be positive");
  }
  const EvalCore core = run_eval(dist, manifest, options);
  return hit_fraction(core.probes, k);
}

EvalReport evaluate(const Matrix& dist, const ItemManifest& manifest,
                    const EvalOptions& options) {
  const EvalCore core = run_eval(dist, manifest, options);
  EvalReport report;
  report.probes.reserve(core.probes.size());
  for (const ProbeScore& p : core.probes) {
    report.probes.push_back(
        {manifest[core.queries[p.row]].image_id, p.ap, p.first_hit_rank});
  }
  for (std::size_t r : core.skipped) {
    report.skipped.push_back(manifest[core.queries[r]].image_id);
  }
  report.mean_ap = mean_of_aps(core.probes);
  report.rank1 = hit_fraction(core.probes, 1);
  report.rank5 = hit_fraction(core.probes, 5);
  report.rank10 = hit_fraction(core.probes, 10);
  return report;
}

void write_report_text(const EvalReport& report, std::ostream& out) {
  out << std::fixed << std::setprecision(6);
  for (const ProbeReport& p : report.probes) {
    out << p.probe_id << "  ap=" << p.ap << "  first_hit=";
    if (p.first_hit_rank == 0) {
      out << "-";
    } else {
      out << p.first_hit_rank;
    }
    out << "\n";
  }
  for (const std::string& id : report.skipped) {
    out << id << "  skipped (no relevant gallery items)\n";
  }
  out << "probes=" << report.probes.size() << " skipped=" << report.skipped.size()
      << " mAP=" << report.mean_ap << " rank1=" << report.rank1 << " rank5=" << report.rank5
      << " rank10=" << report.rank10 << "\n";
}

void write_report_json(const EvalReport& report, std::ostream& out) {
  nlohmann::json doc;
  doc["probes"] = nlohmann::json::array();
  for (const ProbeReport& p : report.probes) {
    doc["probes"].push_back({{"id", p.probe_id},
                             {"ap", p.ap},
                             {"first_hit_rank", p.first_hit_rank}});
  }
  doc["skipped"] = report.skipped;
  doc["mean_ap"] = report.mean_ap;
  doc["rank1"] = report.rank1;
  doc["rank5"] = report.rank5;
  doc["rank10"] = report.rank10;
  out << doc.dump(2) << "\n";
}

}  // namespace reid
