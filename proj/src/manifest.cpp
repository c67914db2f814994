#include "reid/manifest.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "reid/error.hpp"

namespace reid {

const char* split_name(Split split) {
  switch (split) {
    case Split::query: return "query";
    case Split::gallery: return "gallery";
    case Split::train: return "train";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "query") return Split::query;
  if (text == "gallery") return Split::gallery;
  if (text == "train") return Split::train;
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<std::uint32_t> parse_u32(std::string_view s) {
  std::uint32_t v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Checks the two manifest invariants and throws on violation.
void check_invariants(const std::vector<ItemRecord>& items) {
  std::set<std::pair<int, std::string_view>> seen;
  std::map<std::uint32_t, Split> track_split;
  for (const ItemRecord& item : items) {
    if (!seen.emplace(static_cast<int>(item.split), item.image_id).second) {
      fail(errc::duplicate_id, "image id '" + item.image_id + "' appears twice in split " +
                                   split_name(item.split));
    }
    if (item.track_id) {
      auto [it, inserted] = track_split.emplace(*item.track_id, item.split);
      if (!inserted && it->second != item.split) {
        fail(errc::track_split_conflict,
             "track " + std::to_string(*item.track_id) + " spans splits " +
                 split_name(it->second) + " and " + split_name(item.split));
      }
    }
  }
}

}  // namespace

ItemManifest::ItemManifest(std::vector<ItemRecord> items) : items_(std::move(items)) {
  check_invariants(items_);
}

std::vector<std::size_t> ItemManifest::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t ItemManifest::count_of(Split split) const {
  std::size_t n = 0;
  for (const ItemRecord& item : items_) {
    if (item.split == split) ++n;
  }
  return n;
}

ItemManifest ItemManifest::subset(std::span<const std::size_t> indices) const {
  std::vector<ItemRecord> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(items_[i]);
  return ItemManifest(std::move(picked));
}

ItemManifest load_manifest(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    fail(errc::missing_file, "no such file: " + path.string());
  }
  std::ifstream in(path);
  if (!in) fail(errc::io_failure, "cannot open " + path.string());

  std::vector<ItemRecord> items;
  std::string line;
  std::size_t line_no = 0;
  auto parse_fail = [&](const std::string& what) {
    fail(errc::parse_error, path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::string_view rest = stripped;
    for (;;) {
      const std::size_t comma = rest.find(',');
      if (comma == std::string_view::npos) {
        fields.push_back(trim(rest));
        break;
      }
      fields.push_back(trim(rest.substr(0, comma)));
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5) {
      parse_fail("expected 5 comma-separated fields, got " + std::to_string(fields.size()));
    }

    ItemRecord rec;
    if (fields[0].empty()) parse_fail("empty image_id");
    rec.image_id = std::string(fields[0]);

    if (!fields[1].empty()) {
      const auto v = parse_u32(fields[1]);
      if (!v) parse_fail("bad identity '" + std::string(fields[1]) + "'");
      rec.identity = *v;
    }
    {
      const auto v = parse_u32(fields[2]);
      if (!v) parse_fail("bad camera_id '" + std::string(fields[2]) + "'");
      rec.camera_id = *v;
    }
    if (!fields[3].empty()) {
      const auto v = parse_u32(fields[3]);
      if (!v) parse_fail("bad track_id '" + std::string(fields[3]) + "'");
      rec.track_id = *v;
    }
    {
      const auto s = parse_split(fields[4]);
      if (!s) parse_fail("bad split '" + std::string(fields[4]) + "'");
      rec.split = *s;
    }
    items.push_back(std::move(rec));
  }
  return ItemManifest(std::move(items));
}

void save_manifest(const ItemManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_failure, "cannot open " + path.string() + " for writing");
  out << "# image_id,identity,camera_id,track_id,split\n";
  for (const ItemRecord& item : manifest.items()) {
    out << item.image_id << ',';
    if (item.identity) out << *item.identity;
    out << ',' << item.camera_id << ',';
    if (item.track_id) out << *item.track_id;
    out << ',' << split_name(item.split) << '\n';
  }
  out.flush();
  if (!out) fail(errc::io_failure, "write failed on " + path.string());
}

}  // namespace reid
