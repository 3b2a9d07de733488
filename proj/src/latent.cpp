#include "dvton/latent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "dvton/error.hpp"

namespace dvton {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

bool LatentGrid::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
}

std::vector<unsigned char> serialize_latent(const LatentGrid& grid) {
  const std::size_t plane = static_cast<std::size_t>(grid.h) * grid.w;
  std::vector<unsigned char> bytes(8 + plane * grid.c * sizeof(float));
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(grid.h),
                                   static_cast<std::uint32_t>(grid.w)};
  std::memcpy(bytes.data(), header, 8);
  unsigned char* out = bytes.data() + 8;
  for (int ch = 0; ch < grid.c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      const float v = grid.data[i * grid.c + ch];
      std::memcpy(out, &v, sizeof(float));
      out += sizeof(float);
    }
  }
  return bytes;
}

LatentGrid deserialize_latent(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= 8, ErrorKind::kFormat, "latent file shorter than its header");
  std::uint32_t header[2];
  std::memcpy(header, bytes.data(), 8);
  const std::size_t plane = static_cast<std::size_t>(header[0]) * header[1];
  const std::size_t payload = bytes.size() - 8;
  require(plane > 0 && payload % (plane * sizeof(float)) == 0, ErrorKind::kFormat,
          "latent payload size inconsistent with its header");
  LatentGrid grid(static_cast<int>(header[0]), static_cast<int>(header[1]),
                  static_cast<int>(payload / (plane * sizeof(float))));
  const unsigned char* in = bytes.data() + 8;
  for (int ch = 0; ch < grid.c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      std::memcpy(&grid.data[i * grid.c + ch], in, sizeof(float));
      in += sizeof(float);
    }
  }
  return grid;
}

void write_latent(const std::filesystem::path& path, const LatentGrid& grid) {
  const auto bytes = serialize_latent(grid);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LatentGrid read_latent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_latent(bytes);
}

}  // namespace dvton
