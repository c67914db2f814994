#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reid {

enum class Split { query, gallery, train };

const char* split_name(Split split);
std::optional<Split> parse_split(std::string_view text);

struct ItemRecord {
  std::string image_id;
  std::optional<std::uint32_t> identity;
  std::uint32_t camera_id = 0;
  std::optional<std::uint32_t> track_id;
  Split split = Split::gallery;
};

// Ordered item records. Construction enforces the manifest invariants:
// image ids unique within a split, and all items of a track in one split.
class ItemManifest {
 public:
  ItemManifest() = default;
  explicit ItemManifest(std::vector<ItemRecord> items);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const ItemRecord& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<ItemRecord>& items() const { return items_; }

  // Indices of the items in a split, in manifest order.
  std::vector<std::size_t> indices_of(Split split) const;
  std::size_t count_of(Split split) const;

  ItemManifest subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<ItemRecord> items_;
};

// Text manifest: one record per line,
// `image_id,identity,camera_id,track_id,split`, empty fields for optional
// values, `#` starts a comment line. Parse failures carry the line number.
ItemManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ItemManifest& manifest, const std::filesystem::path& path);

}  // namespace reid
