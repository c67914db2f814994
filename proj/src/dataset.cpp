#include "reid/dataset.hpp"

#include <cmath>
#include <map>
#include <optional>

#include "reid/error.hpp"
#include "reid/io.hpp"

namespace reid {

bool ValidationReport::has(ViolationKind kind) const {
  for (const Violation& v : violations) {
    if (v.kind == kind) return true;
  }
  return false;
}

namespace {

void check_finite(const Matrix& m, const std::string& what,
                  std::vector<Violation>& out) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      out.push_back({ViolationKind::non_finite_value,
                     what + " has a non-finite value at row " + std::to_string(i / m.cols()) +
                         " col " + std::to_string(i % m.cols())});
      return;  // first offender per matrix is enough
    }
  }
}

}  // namespace

ValidationReport validate_dataset(const ItemManifest& manifest, const Matrix& embeddings,
                                  const MetadataFeatureSet* metadata) {
  ValidationReport report;
  auto& v = report.violations;

  if (embeddings.rows() != manifest.size()) {
    v.push_back({ViolationKind::count_mismatch,
                 "manifest has " + std::to_string(manifest.size()) + " items but embeddings have " +
                     std::to_string(embeddings.rows()) + " rows"});
  }
  check_finite(embeddings, "embeddings", v);

  if (metadata) {
    for (const auto& [family, m] : metadata->families) {
      if (m.rows() != manifest.size()) {
        v.push_back({ViolationKind::count_mismatch,
                     "metadata family '" + family + "' has " + std::to_string(m.rows()) +
                         " rows but manifest has " + std::to_string(manifest.size()) + " items"});
      }
      check_finite(m, "metadata family '" + family + "'", v);
    }
  }

  // Track integrity: one camera and one identity per track.
  std::map<std::uint32_t, std::pair<std::uint32_t, std::optional<std::uint32_t>>> track_info;
  for (const ItemRecord& item : manifest.items()) {
    if (!item.track_id) continue;
    auto [it, inserted] = track_info.emplace(*item.track_id,
                                             std::make_pair(item.camera_id, item.identity));
    if (inserted) continue;
    if (it->second.first != item.camera_id) {
      v.push_back({ViolationKind::track_camera_mismatch,
                   "track " + std::to_string(*item.track_id) + " spans cameras " +
                       std::to_string(it->second.first) + " and " +
                       std::to_string(item.camera_id)});
      it->second.first = item.camera_id;  // report each track pair once
    }
    if (it->second.second && item.identity && *it->second.second != *item.identity) {
      v.push_back({ViolationKind::track_identity_mismatch,
                   "track " + std::to_string(*item.track_id) + " mixes identities " +
                       std::to_string(*it->second.second) + " and " +
                       std::to_string(*item.identity)});
      it->second.second = item.identity;
    }
  }
  return report;
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    fail(errc::missing_file, "no such dataset directory: " + dir.string());
  }
  Dataset ds;
  ds.manifest = load_manifest(dir / "manifest.csv");
  ds.embeddings = load_matrix(dir / "embeddings.reid");

  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.starts_with("meta_") && name.ends_with(".reid")) {
      const std::string family = name.substr(5, name.size() - 5 - 5);
      if (family.empty()) continue;
      ds.metadata.families[family] = load_matrix(entry.path());
    }
  }
  return ds;
}

void save_dataset_dir(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(errc::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  save_manifest(dataset.manifest, dir / "manifest.csv");
  save_matrix(dataset.embeddings, dir / "embeddings.reid");
  for (const auto& [family, m] : dataset.metadata.families) {
    save_matrix(m, dir / ("meta_" + family + ".reid"));
  }
}

}  // namespace reid
