#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/matrix.hpp"

namespace reid {

// Named auxiliary embedding matrices ("color", "type", ...) aligned
// row-for-row with a manifest.
struct MetadataFeatureSet {
  std::map<std::string, Matrix> families;

  bool empty() const { return families.empty(); }
};

enum class ViolationKind {
  count_mismatch,
  non_finite_value,
  track_camera_mismatch,
  track_identity_mismatch,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

// Cross-checks a manifest against embeddings and optional metadata.
// Violations are data, not errors: the report lists every one found.
ValidationReport validate_dataset(const ItemManifest& manifest, const Matrix& embeddings,
                                  const MetadataFeatureSet* metadata = nullptr);

// A dataset directory holds manifest.csv, embeddings.reid and one
// meta_<family>.reid per metadata family.
struct Dataset {
  ItemManifest manifest;
  Matrix embeddings;
  MetadataFeatureSet metadata;
};

Dataset load_dataset_dir(const std::filesystem::path& dir);
void save_dataset_dir(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace reid
