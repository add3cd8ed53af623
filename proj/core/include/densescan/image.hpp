#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

namespace densescan {

// Interleaved 8-bit RGB, row-major.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height bytes

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  std::uint8_t* row(int y) { return pixels.data() + static_cast<std::size_t>(y) * width * 3; }
  const std::uint8_t* row(int y) const {
    return pixels.data() + static_cast<std::size_t>(y) * width * 3;
  }
  std::uint8_t* at(int y, int x) { return row(y) + 3 * x; }
  const std::uint8_t* at(int y, int x) const { return row(y) + 3 * x; }

  void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
      pixels[i] = r;
      pixels[i + 1] = g;
      pixels[i + 2] = b;
    }
  }

  bool operator==(const ImageRGB&) const = default;
};

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageGray() = default;
  ImageGray(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h) {}

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const ImageGray&) const = default;
};

// Dense float tensor, layout [channel][row][col], rows contiguous.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float* channel(int c) { return data.data() + c * plane(); }
  const float* channel(int c) const { return data.data() + c * plane(); }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
};

// BT.601 luma, rounded to nearest.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  double v = 0.299 * r + 0.587 * g + 0.114 * b;
  long rounded = static_cast<long>(v + 0.5);
  return static_cast<std::uint8_t>(rounded > 255 ? 255 : rounded);
}

// Converts 8-bit RGB to a 3-channel float tensor in [0,1].
inline Tensor to_tensor(const ImageRGB& img) {
  Tensor t(3, img.height, img.width);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* src = img.row(y);
    for (int x = 0; x < img.width; ++x) {
      t.at(0, y, x) = src[3 * x] * inv;
      t.at(1, y, x) = src[3 * x + 1] * inv;
      t.at(2, y, x) = src[3 * x + 2] * inv;
    }
  }
  return t;
}

}  // namespace densescan
