#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvton/tensor.hpp"

namespace dvton {

// Named f32/f64 tensors plus a JSON metadata object.
//
// File layout (little-endian):
//   8 bytes  magic "DVTNARCH"
//   u32      format version
//   u64      manifest length L
//   L bytes  JSON manifest {"metadata": {...}, "tensors": [{name, dtype, shape, offset, bytes}]}
//   payload  tensor bytes, offsets relative to the payload start
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json metadata = nlohmann::json::object();

  void add(const std::string& name, const MatF& m);
  void add(const std::string& name, const MatD& m);

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  // Shape as stored; dtype "f32" or "f64".
  std::vector<std::int64_t> shape(const std::string& name) const;
  std::string dtype(const std::string& name) const;

  MatF get_f32(const std::string& name) const;
  MatD get_f64(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<unsigned char> bytes;
  };
  const Entry& find(const std::string& name) const;
  void put(Entry e);
  std::vector<Entry> entries_;
};

}  // namespace dvton
