#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "densescan/image.hpp"

namespace densescan {

struct RegionRequest {
  int level = 0;
  std::int64_t y = 0;  // top-left in level coords; may be negative
  std::int64_t x = 0;
  int side = 0;
};

// Tiled multi-resolution RGB pyramid backed by a directory of PNG tiles plus
// manifest.json. Level-0 coordinates are the single ground frame; level-l
// dims follow H_l = ceil(H_0 / 2^l). Opened slides are read-only and safe to
// share across threads; tiles are decoded lazily and kept in a bounded cache.
class SlidePyramid {
 public:
  static SlidePyramid open(const std::filesystem::path& manifest_path);

  const std::string& slide_id() const { return slide_id_; }
  int levels() const { return levels_; }
  int tile_side() const { return tile_side_; }
  std::int64_t height0() const { return height0_; }
  std::int64_t width0() const { return width0_; }
  std::pair<std::int64_t, std::int64_t> level_dims(int level) const;  // (height, width)
  const std::filesystem::path& directory() const { return dir_; }

  // Returns the side x side region at the requested level. Pixels outside the
  // slide bounds come back white (255,255,255). Throws LevelError if level is
  // out of range. Thread-safe.
  ImageRGB fetch_region(const RegionRequest& req) const;

 private:
  SlidePyramid() = default;

  std::shared_ptr<const ImageRGB> tile(int level, std::int64_t row, std::int64_t col) const;

  std::filesystem::path dir_;
  std::string slide_id_;
  std::int64_t height0_ = 0;
  std::int64_t width0_ = 0;
  int levels_ = 0;
  int tile_side_ = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> dims_;

  struct TileCache;
  std::shared_ptr<TileCache> cache_;  // shared so SlidePyramid stays copyable
};

// Streaming pyramid writer: push level-0 rows top to bottom; lower-resolution
// levels are built on the fly by 2x2 box-mean downsampling (round half up),
// so a slide larger than memory never has to be materialized.
class SlidePyramidWriter {
 public:
  SlidePyramidWriter(std::filesystem::path dir, std::string slide_id, std::int64_t height0,
                     std::int64_t width0, int levels, int tile_side = 512);
  ~SlidePyramidWriter();

  SlidePyramidWriter(const SlidePyramidWriter&) = delete;
  SlidePyramidWriter& operator=(const SlidePyramidWriter&) = delete;

  // rgb points at row_count full level-0 rows (width0 * 3 bytes each).
  void append_rows(const std::uint8_t* rgb, int row_count);

  // Flushes remaining bands and writes manifest.json. Returns the manifest path.
  std::filesystem::path finish();

 private:
  struct LevelBand;
  void push_rows(int level, const std::uint8_t* rgb, int row_count);
  void flush_band(int level, bool final_flush);

  std::filesystem::path dir_;
  std::string slide_id_;
  std::int64_t height0_ = 0;
  std::int64_t width0_ = 0;
  int levels_ = 0;
  int tile_side_ = 0;
  bool finished_ = false;
  std::vector<std::unique_ptr<LevelBand>> bands_;
};

// Convenience wrapper for slides that fit in memory.
std::filesystem::path write_slide(const ImageRGB& level0, const std::filesystem::path& dir,
                                  const std::string& slide_id, int levels, int tile_side = 512);

}  // namespace densescan
