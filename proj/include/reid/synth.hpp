#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "reid/dataset.hpp"

namespace reid {

// Synthetic identity-cluster dataset. Generation is single-threaded and
// fully determined by the seed (see README, "Determinism contract").
struct SynthConfig {
  std::size_t num_identities = 50;
  std::size_t images_per_identity = 8;  // >= 2: one query image, rest gallery
  std::size_t dim = 32;
  double intra_sigma = 1.0;  // within-identity noise scale
  double inter_sep = 2.5;    // minimum pairwise center separation
  std::size_t num_cameras = 6;
  std::size_t track_len = 4;
  std::map<std::string, std::size_t> meta_dims = {{"color", 8}, {"type", 4}};
  double meta_fidelity = 0.7;  // fraction of identity signal in metadata embeddings
  std::uint64_t seed = 42;
};

// Places identity centers on random directions with rejection until every
// pairwise separation is at least inter_sep, draws per-image embeddings as
// center + intra_sigma * noise, groups gallery images into per-camera
// tracks of track_len, and assigns exactly one query image per identity.
Dataset generate(const SynthConfig& config);

}  // namespace reid
