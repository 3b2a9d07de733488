#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dvton {

// RGB image, row-major HWC, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width + col) * kChannels + ch;
  }
  float& at(int row, int col, int ch) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data[index(row, col, ch)]; }

  bool empty() const { return height == 0 || width == 0; }
  // Values finite, inside [0, 1], and data length consistent with extent.
  bool valid() const;

  bool operator==(const Image&) const = default;
};

// Binary keep-mask: 1 = keep source pixel, 0 = region to regenerate.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 1)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  std::size_t edit_count() const;
  bool operator==(const Mask&) const = default;
};

// Rendered body-pose skeleton; same extent as its source image.
struct PoseMap {
  Image image;
  bool operator==(const PoseMap&) const = default;
};

// Half-open pixel rectangle.
struct BBox {
  int top = 0;
  int left = 0;
  int bottom = 0;
  int right = 0;

  int height() const { return bottom - top; }
  int width() const { return right - left; }
  bool contains(int row, int col) const {
    return row >= top && row < bottom && col >= left && col < right;
  }
  bool operator==(const BBox&) const = default;
};

}  // namespace dvton
