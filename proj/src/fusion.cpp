#include "reid/fusion.hpp"

#include <cstring>
#include <string>

#include "reid/error.hpp"

namespace reid {

Matrix FeatureMap::to_matrix() const {
  Matrix m(height_ * width_, channels_);
  std::memcpy(m.data(), values_.data(), values_.size() * sizeof(double));
  return m;
}

FeatureMap FeatureMap::from_matrix(const Matrix& m, std::size_t height, std::size_t width) {
  if (height * width != m.rows()) {
    fail(errc::shape_mismatch, std::to_string(height) + "x" + std::to_string(width) +
                                   " grid does not cover " + std::to_string(m.rows()) + " rows");
  }
  FeatureMap map(height, width, m.cols());
  std::memcpy(map.values_.data(), m.data(), m.size() * sizeof(double));
  return map;
}

bool FeatureMap::bitwise_equal(const FeatureMap& other) const {
  if (height_ != other.height_ || width_ != other.width_ || channels_ != other.channels_) {
    return false;
  }
  return std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

std::pair<ChannelMask, ChannelMask> make_masks(std::size_t channels) {
  if (channels < 1) {
    fail(errc::config_invalid, "channel count must be positive");
  }
  ChannelMask mask_global;
  ChannelMask mask_local;
  mask_global.bits.resize(channels);
  mask_local.bits.resize(channels);
  const std::size_t zeros = channels / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    mask_global.bits[c] = c < zeros ? 0 : 1;
    mask_local.bits[c] = 1 - mask_global.bits[c];
  }
  return {mask_global, mask_local};
}

FeatureMap fuse(const FeatureMap& global_map, const FeatureMap& local_map, FuseMode mode) {
  if (global_map.height() != local_map.height() || global_map.width() != local_map.width() ||
      global_map.channels() != local_map.channels()) {
    fail(errc::shape_mismatch, "feature maps are " + std::to_string(global_map.height()) + "x" +
                                   std::to_string(global_map.width()) + "x" +
                                   std::to_string(global_map.channels()) + " vs " +
                                   std::to_string(local_map.height()) + "x" +
                                   std::to_string(local_map.width()) + "x" +
                                   std::to_string(local_map.channels()));
  }
  const std::size_t channels = global_map.channels();
  const auto [mask_global, mask_local] = make_masks(channels);
  const std::vector<std::uint8_t>& pick_global =
      mode == FuseMode::glamor ? mask_global.bits : mask_local.bits;

  // Each channel is a 0/1 selection, so the output copies one input's value
  // bit for bit; no arithmetic is performed.
  FeatureMap out(global_map.height(), global_map.width(), channels);
  const std::size_t cells = global_map.height() * global_map.width();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t base = cell * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      out.values()[base + c] =
          pick_global[c] ? global_map.values()[base + c] : local_map.values()[base + c];
    }
  }
  return out;
}

}  // namespace reid
