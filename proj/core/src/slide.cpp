#include "densescan/slide.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "densescan/errors.hpp"
#include "densescan/png_io.hpp"
#include "json.hpp"

namespace densescan {
namespace {

std::int64_t halved(std::int64_t v, int level) {
  // ceil(v / 2^level)
  const std::int64_t unit = std::int64_t{1} << level;
  return (v + unit - 1) / unit;
}

std::string tile_name(int level, std::int64_t row, std::int64_t col) {
  return "L" + std::to_string(level) + "_r" + std::to_string(row) + "_c" + std::to_string(col) +
         ".png";
}

}  // namespace

// ---------------------------------------------------------------------------
// Reading

struct SlidePyramid::TileCache {
  struct Key {
    int level;
    std::int64_t row, col;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = std::hash<int>()(k.level);
      h = h * 1000003u ^ std::hash<std::int64_t>()(k.row);
      h = h * 1000003u ^ std::hash<std::int64_t>()(k.col);
      return h;
    }
  };
  struct Entry {
    std::shared_ptr<const ImageRGB> img;
    std::list<Key>::iterator lru_it;
  };

  std::mutex mu;
  std::unordered_map<Key, Entry, KeyHash> map;
  std::list<Key> lru;  // front = most recent
  std::size_t bytes = 0;
  std::size_t budget = 256ull << 20;

  std::shared_ptr<const ImageRGB> lookup(const Key& k) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = map.find(k);
    if (it == map.end()) return nullptr;
    lru.splice(lru.begin(), lru, it->second.lru_it);
    return it->second.img;
  }

  std::shared_ptr<const ImageRGB> insert(const Key& k, std::shared_ptr<const ImageRGB> img) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = map.find(k);
    if (it != map.end()) return it->second.img;  // raced with another decoder
    lru.push_front(k);
    bytes += img->pixels.size();
    map.emplace(k, Entry{img, lru.begin()});
    while (bytes > budget && lru.size() > 1) {
      const Key victim = lru.back();
      lru.pop_back();
      auto vit = map.find(victim);
      bytes -= vit->second.img->pixels.size();
      map.erase(vit);
    }
    return img;
  }
};

SlidePyramid SlidePyramid::open(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  SlidePyramid s;
  s.dir_ = manifest_path.parent_path();
  try {
    s.slide_id_ = j.at("slide_id").get<std::string>();
    s.width0_ = j.at("width0").get<std::int64_t>();
    s.height0_ = j.at("height0").get<std::int64_t>();
    s.levels_ = j.at("levels").get<int>();
    s.tile_side_ = j.at("tile_side").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + " missing field: " + e.what());
  }
  if (s.width0_ <= 0 || s.height0_ <= 0 || s.levels_ <= 0 || s.tile_side_ <= 0) {
    throw FormatError("manifest " + manifest_path.string() + " has non-positive dims");
  }

  if (j.contains("level_dims")) {
    const auto& dims = j.at("level_dims");
    if (!dims.is_array() || static_cast<int>(dims.size()) != s.levels_) {
      throw FormatError("manifest level_dims does not list every level");
    }
    for (int l = 0; l < s.levels_; ++l) {
      const std::int64_t h = dims[l].at(0).get<std::int64_t>();
      const std::int64_t w = dims[l].at(1).get<std::int64_t>();
      if (h != halved(s.height0_, l) || w != halved(s.width0_, l)) {
        throw FormatError("manifest level " + std::to_string(l) +
                          " dims violate the halving rule");
      }
    }
  }
  for (int l = 0; l < s.levels_; ++l) {
    s.dims_.emplace_back(halved(s.height0_, l), halved(s.width0_, l));
  }

  // Every referenced tile must exist; decode stays lazy.
  for (int l = 0; l < s.levels_; ++l) {
    const auto [h, w] = s.dims_[l];
    const std::int64_t rows = (h + s.tile_side_ - 1) / s.tile_side_;
    const std::int64_t cols = (w + s.tile_side_ - 1) / s.tile_side_;
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        const auto p = s.dir_ / tile_name(l, r, c);
        if (!std::filesystem::exists(p)) {
          throw MissingTileError("manifest references missing tile " + p.string());
        }
      }
    }
  }

  s.cache_ = std::make_shared<TileCache>();
  return s;
}

std::pair<std::int64_t, std::int64_t> SlidePyramid::level_dims(int level) const {
  if (level < 0 || level >= levels_) {
    throw LevelError("level " + std::to_string(level) + " out of range [0," +
                     std::to_string(levels_) + ")");
  }
  return dims_[level];
}

std::shared_ptr<const ImageRGB> SlidePyramid::tile(int level, std::int64_t row,
                                                   std::int64_t col) const {
  const TileCache::Key key{level, row, col};
  if (auto hit = cache_->lookup(key)) return hit;
  auto img = std::make_shared<ImageRGB>(read_png_rgb(dir_ / tile_name(level, row, col)));
  return cache_->insert(key, std::move(img));
}

ImageRGB SlidePyramid::fetch_region(const RegionRequest& req) const {
  if (req.side <= 0) throw RangeError("region side must be positive");
  if (req.level < 0 || req.level >= levels_) {
    throw LevelError("level " + std::to_string(req.level) + " out of range [0," +
                     std::to_string(levels_) + ")");
  }
  const auto [lh, lw] = dims_[req.level];

  ImageRGB out(req.side, req.side);
  out.fill(255, 255, 255);

  const std::int64_t y0 = std::max<std::int64_t>(req.y, 0);
  const std::int64_t x0 = std::max<std::int64_t>(req.x, 0);
  const std::int64_t y1 = std::min<std::int64_t>(req.y + req.side, lh);
  const std::int64_t x1 = std::min<std::int64_t>(req.x + req.side, lw);
  if (y0 >= y1 || x0 >= x1) return out;  // fully outside: all white

  const int T = tile_side_;
  for (std::int64_t ty = y0 / T; ty <= (y1 - 1) / T; ++ty) {
    for (std::int64_t tx = x0 / T; tx <= (x1 - 1) / T; ++tx) {
      const auto t = tile(req.level, ty, tx);
      const std::int64_t cy0 = std::max(y0, ty * T);
      const std::int64_t cy1 = std::min(y1, ty * T + t->height);
      const std::int64_t cx0 = std::max(x0, tx * T);
      const std::int64_t cx1 = std::min(x1, tx * T + t->width);
      for (std::int64_t y = cy0; y < cy1; ++y) {
        const std::uint8_t* src = t->at(static_cast<int>(y - ty * T), static_cast<int>(cx0 - tx * T));
        std::uint8_t* dst = out.at(static_cast<int>(y - req.y), static_cast<int>(cx0 - req.x));
        std::memcpy(dst, src, static_cast<std::size_t>(cx1 - cx0) * 3);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writing

struct SlidePyramidWriter::LevelBand {
  std::int64_t height = 0;  // level dims
  std::int64_t width = 0;
  std::vector<std::uint8_t> band;      // tile_side rows of width*3 bytes
  int band_rows = 0;                   // filled rows in band
  std::int64_t band_index = 0;         // vertical tile index of the band
  std::int64_t rows_seen = 0;
  std::vector<std::uint8_t> carry;     // one unpaired row awaiting downsample
  bool has_carry = false;
};

SlidePyramidWriter::SlidePyramidWriter(std::filesystem::path dir, std::string slide_id,
                                       std::int64_t height0, std::int64_t width0, int levels,
                                       int tile_side)
    : dir_(std::move(dir)),
      slide_id_(std::move(slide_id)),
      height0_(height0),
      width0_(width0),
      levels_(levels),
      tile_side_(tile_side) {
  if (height0 <= 0 || width0 <= 0 || levels <= 0 || tile_side <= 0) {
    throw RangeError("writer dims must be strictly positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec && !std::filesystem::is_directory(dir_)) {
    throw IoError("cannot create slide directory " + dir_.string());
  }
  for (int l = 0; l < levels_; ++l) {
    auto band = std::make_unique<LevelBand>();
    band->height = halved(height0_, l);
    band->width = halved(width0_, l);
    band->band.resize(static_cast<std::size_t>(tile_side_) * band->width * 3);
    band->carry.resize(static_cast<std::size_t>(band->width) * 3);
    bands_.push_back(std::move(band));
  }
}

SlidePyramidWriter::~SlidePyramidWriter() = default;

void SlidePyramidWriter::flush_band(int level, bool final_flush) {
  LevelBand& b = *bands_[level];
  if (b.band_rows == 0) return;
  if (!final_flush && b.band_rows < tile_side_) return;

  const std::int64_t cols = (b.width + tile_side_ - 1) / tile_side_;
  for (std::int64_t c = 0; c < cols; ++c) {
    const int tw = static_cast<int>(std::min<std::int64_t>(tile_side_, b.width - c * tile_side_));
    ImageRGB tile(tw, b.band_rows);
    for (int y = 0; y < b.band_rows; ++y) {
      std::memcpy(tile.row(y),
                  b.band.data() + (static_cast<std::size_t>(y) * b.width + c * tile_side_) * 3,
                  static_cast<std::size_t>(tw) * 3);
    }
    write_png(dir_ / tile_name(level, b.band_index, c), tile);
  }
  b.band_index++;
  b.band_rows = 0;
}

void SlidePyramidWriter::push_rows(int level, const std::uint8_t* rgb, int row_count) {
  LevelBand& b = *bands_[level];
  for (int r = 0; r < row_count; ++r) {
    const std::uint8_t* row = rgb + static_cast<std::size_t>(r) * b.width * 3;
    std::memcpy(b.band.data() + static_cast<std::size_t>(b.band_rows) * b.width * 3, row,
                static_cast<std::size_t>(b.width) * 3);
    b.band_rows++;
    b.rows_seen++;
    if (b.band_rows == tile_side_) flush_band(level, false);

    if (level + 1 < levels_) {
      LevelBand& next = *bands_[level + 1];
      if (!b.has_carry) {
        std::memcpy(b.carry.data(), row, static_cast<std::size_t>(b.width) * 3);
        b.has_carry = true;
        // An odd trailing row still has to reach the next level.
        if (b.rows_seen == b.height) {
          std::vector<std::uint8_t> down(static_cast<std::size_t>(next.width) * 3);
          const std::uint8_t* rows[1] = {b.carry.data()};
          for (std::int64_t x = 0; x < next.width; ++x) {
            const int xs = (2 * x + 1 < b.width) ? 2 : 1;
            for (int ch = 0; ch < 3; ++ch) {
              unsigned sum = 0;
              for (int dx = 0; dx < xs; ++dx) sum += rows[0][(2 * x + dx) * 3 + ch];
              const unsigned cnt = xs;
              down[x * 3 + ch] = static_cast<std::uint8_t>((2 * sum + cnt) / (2 * cnt));
            }
          }
          b.has_carry = false;
          push_rows(level + 1, down.data(), 1);
        }
      } else {
        std::vector<std::uint8_t> down(static_cast<std::size_t>(next.width) * 3);
        const std::uint8_t* rows[2] = {b.carry.data(), row};
        for (std::int64_t x = 0; x < next.width; ++x) {
          const int xs = (2 * x + 1 < b.width) ? 2 : 1;
          for (int ch = 0; ch < 3; ++ch) {
            unsigned sum = 0;
            for (int ry = 0; ry < 2; ++ry) {
              for (int dx = 0; dx < xs; ++dx) sum += rows[ry][(2 * x + dx) * 3 + ch];
            }
            const unsigned cnt = 2 * xs;
            // round half up
            down[x * 3 + ch] = static_cast<std::uint8_t>((2 * sum + cnt) / (2 * cnt));
          }
        }
        b.has_carry = false;
        push_rows(level + 1, down.data(), 1);
      }
    }
  }
}

void SlidePyramidWriter::append_rows(const std::uint8_t* rgb, int row_count) {
  if (finished_) throw IoError("append_rows after finish");
  if (bands_[0]->rows_seen + row_count > height0_) {
    throw RangeError("more rows appended than height0");
  }
  push_rows(0, rgb, row_count);
}

std::filesystem::path SlidePyramidWriter::finish() {
  if (finished_) throw IoError("finish called twice");
  if (bands_[0]->rows_seen != height0_) {
    throw RangeError("finish before all " + std::to_string(height0_) + " rows were appended");
  }
  for (int l = 0; l < levels_; ++l) flush_band(l, true);
  for (int l = 0; l < levels_; ++l) {
    if (bands_[l]->rows_seen != bands_[l]->height) {
      throw IoError("pyramid cascade lost rows at level " + std::to_string(l));
    }
  }
  finished_ = true;

  nlohmann::json dims = nlohmann::json::array();
  for (int l = 0; l < levels_; ++l) {
    dims.push_back({halved(height0_, l), halved(width0_, l)});
  }
  nlohmann::json j{{"slide_id", slide_id_}, {"width0", width0_},       {"height0", height0_},
                   {"levels", levels_},    {"tile_side", tile_side_}, {"level_dims", dims}};
  const auto manifest = dir_ / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write manifest " + manifest.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest " + manifest.string());
  return manifest;
}

std::filesystem::path write_slide(const ImageRGB& level0, const std::filesystem::path& dir,
                                  const std::string& slide_id, int levels, int tile_side) {
  SlidePyramidWriter w(dir, slide_id, level0.height, level0.width, levels, tile_side);
  w.append_rows(level0.pixels.data(), level0.height);
  return w.finish();
}

}  // namespace densescan
