#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "reid/matrix.hpp"

namespace reid {

// H x W x C feature map, channel-fastest: value(h, w, c) sits at
// values[(h * W + w) * C + c]. Flattening to a matrix uses rows = H*W,
// cols = C.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        values_(height * width * channels, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t h, std::size_t w, std::size_t c) {
    return values_[(h * width_ + w) * channels_ + c];
  }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return values_[(h * width_ + w) * channels_ + c];
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  Matrix to_matrix() const;
  static FeatureMap from_matrix(const Matrix& m, std::size_t height, std::size_t width);

  bool bitwise_equal(const FeatureMap& other) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

// Binary channel mask; each entry is 0 or 1.
struct ChannelMask {
  std::vector<std::uint8_t> bits;
};

enum class FuseMode {
  glamor,   // mask_global (.) F_G + mask_local (.) F_L
  counter,  // mask_local (.) F_G + mask_global (.) F_L
};

// mask_global is zero on the lower floor(C/2) channels and one above;
// mask_local is its complement. Returns (mask_global, mask_local).
std::pair<ChannelMask, ChannelMask> make_masks(std::size_t channels);

// Combines two equally shaped maps by channel selection. Since the masks
// are exact 0/1 complements, each output channel is a bitwise copy of one
// input's channel.
FeatureMap fuse(const FeatureMap& global_map, const FeatureMap& local_map, FuseMode mode);

}  // namespace reid
