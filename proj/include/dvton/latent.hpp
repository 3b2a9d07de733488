#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dvton {

// Encoded h x w x c grid, row-major with channels innermost.
struct LatentGrid {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;

  LatentGrid() = default;
  LatentGrid(int rows, int cols, int channels, float fill = 0.0f)
      : h(rows), w(cols), c(channels),
        data(static_cast<std::size_t>(rows) * cols * channels, fill) {}

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * w + col) * c + ch;
  }
  float& at(int row, int col, int ch) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data[index(row, col, ch)]; }

  bool same_shape(const LatentGrid& o) const { return h == o.h && w == o.w && c == o.c; }
  bool all_finite() const;

  bool operator==(const LatentGrid&) const = default;
};

// On-disk form: u32 h, u32 w (little-endian), then c planes of h*w f32.
// The channel count follows from the file size.
std::vector<unsigned char> serialize_latent(const LatentGrid& grid);
LatentGrid deserialize_latent(const std::vector<unsigned char>& bytes);
void write_latent(const std::filesystem::path& path, const LatentGrid& grid);
LatentGrid read_latent(const std::filesystem::path& path);

}  // namespace dvton
