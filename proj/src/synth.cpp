#include "reid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "reid/error.hpp"
#include "reid/rng.hpp"

namespace reid {

namespace {

void require_config(const SynthConfig& c) {
  if (c.num_identities < 1) fail(errc::config_invalid, "num_identities must be positive");
  if (c.images_per_identity < 2) {
    fail(errc::config_invalid, "images_per_identity must be at least 2 (one query + gallery)");
  }
  if (c.dim < 1) fail(errc::config_invalid, "dim must be positive");
  if (!(c.intra_sigma > 0.0)) fail(errc::config_invalid, "intra_sigma must be positive");
  if (!(c.inter_sep > 0.0)) fail(errc::config_invalid, "inter_sep must be positive");
  if (c.num_cameras < 1) fail(errc::config_invalid, "num_cameras must be positive");
  if (c.track_len < 1) fail(errc::config_invalid, "track_len must be positive");
  if (!(c.meta_fidelity >= 0.0 && c.meta_fidelity <= 1.0)) {
    fail(errc::config_invalid, "meta_fidelity must lie in [0, 1]");
  }
  for (const auto& [family, dim] : c.meta_dims) {
    if (family.empty()) fail(errc::config_invalid, "metadata family name is empty");
    if (dim < 1) fail(errc::config_invalid, "metadata family " + family + " has dimension 0");
  }
}

std::string image_name(std::size_t identity, std::size_t image) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "v%04zu_i%02zu", identity + 1, image);
  return buf;
}

std::vector<double> gaussian_vec(Rng& rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

// Centers sit on random directions at a shared radius; the radius grows 5%
// per rejection, so pairwise separation >= inter_sep is eventually met even
// in low dimensions.
std::vector<std::vector<double>> draw_centers(Rng& rng, const SynthConfig& c) {
  std::vector<std::vector<double>> centers;
  centers.reserve(c.num_identities);
  double radius = c.inter_sep;
  while (centers.size() < c.num_identities) {
    std::vector<double> dir = gaussian_vec(rng, c.dim, 1.0);
    double norm = 0.0;
    for (double x : dir) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;  // degenerate draw, try again
    for (double& x : dir) x *= radius / norm;

    bool separated = true;
    for (const auto& other : centers) {
      if (distance(dir, other) < c.inter_sep) {
        separated = false;
        break;
      }
    }
    if (separated) {
      centers.push_back(std::move(dir));
    } else {
      radius *= 1.05;
    }
  }
  return centers;
}

}  // namespace

Dataset generate(const SynthConfig& config) {
  require_config(config);
  Rng rng(config.seed);

  const std::vector<std::vector<double>> centers = draw_centers(rng, config);

  // Per-identity metadata centers, families in name order.
  std::map<std::string, std::vector<std::vector<double>>> meta_centers;
  for (std::size_t id = 0; id < config.num_identities; ++id) {
    for (const auto& [family, dim] : config.meta_dims) {
      meta_centers[family].push_back(gaussian_vec(rng, dim, 2.0));
    }
  }

  const std::size_t total = config.num_identities * config.images_per_identity;
  Dataset dataset;
  dataset.embeddings = Matrix(total, config.dim);
  for (const auto& [family, dim] : config.meta_dims) {
    dataset.metadata.families.emplace(family, Matrix(total, dim));
  }

  std::vector<ItemRecord> items;
  items.reserve(total);
  std::size_t row = 0;
  std::uint32_t next_track = 0;

  auto fill_row = [&](std::size_t identity) {
    const std::vector<double> noise = gaussian_vec(rng, config.dim, 1.0);
    double* dst = dataset.embeddings.data() + row * config.dim;
    for (std::size_t c = 0; c < config.dim; ++c) {
      dst[c] = centers[identity][c] + config.intra_sigma * noise[c];
    }
    for (const auto& [family, dim] : config.meta_dims) {
      const std::vector<double> meta_noise = gaussian_vec(rng, dim, 2.0);
      const std::vector<double>& center = meta_centers[family][identity];
      double* out = dataset.metadata.families.at(family).data() + row * dim;
      for (std::size_t c = 0; c < dim; ++c) {
        out[c] = config.meta_fidelity * center[c] + (1.0 - config.meta_fidelity) * meta_noise[c];
      }
    }
    ++row;
  };

  for (std::size_t id = 0; id < config.num_identities; ++id) {
    const auto label = static_cast<std::uint32_t>(id);

    // image 0: the query probe, untracked
    const auto query_camera = static_cast<std::uint32_t>(rng.uniform_below(config.num_cameras));
    items.push_back({image_name(id, 0), label, query_camera, std::nullopt, Split::query});
    fill_row(id);

    // remaining images: gallery, grouped into single-camera tracks
    std::size_t image = 1;
    std::size_t remaining = config.images_per_identity - 1;
    while (remaining > 0) {
      const std::size_t len = std::min(config.track_len, remaining);
      const auto camera = static_cast<std::uint32_t>(rng.uniform_below(config.num_cameras));
      const std::uint32_t track = next_track++;
      for (std::size_t k = 0; k < len; ++k) {
        items.push_back({image_name(id, image), label, camera, track, Split::gallery});
        fill_row(id);
        ++image;
      }
      remaining -= len;
    }
  }

  dataset.manifest = ItemManifest(std::move(items));
  return dataset;
}

}  // namespace reid
