#include "dvton/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dvton/error.hpp"

namespace dvton {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'V', 'T', 'N', 'A', 'R', 'C', 'H'};

template <typename T>
std::vector<unsigned char> raw_bytes(const Mat<T>& m) {
  std::vector<unsigned char> b(static_cast<std::size_t>(m.size()) * sizeof(T));
  if (!b.empty()) std::memcpy(b.data(), m.data(), b.size());
  return b;
}

template <typename T>
Mat<T> from_bytes(const std::vector<unsigned char>& b, const std::vector<std::int64_t>& shape) {
  const Eigen::Index rows = shape.empty() ? 1 : shape[0];
  const Eigen::Index cols = shape.size() < 2 ? 1 : shape[1];
  Mat<T> m(rows, cols);
  if (!b.empty()) std::memcpy(m.data(), b.data(), b.size());
  return m;
}

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const std::string& path) {
  require(pos + sizeof(T) <= in.size(), ErrorKind::kFormat, "truncated archive header: " + path);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void TensorArchive::put(Entry e) {
  for (auto& existing : entries_) {
    if (existing.name == e.name) {
      existing = std::move(e);
      return;
    }
  }
  entries_.push_back(std::move(e));
}

void TensorArchive::add(const std::string& name, const MatF& m) {
  put({name, "f32", {m.rows(), m.cols()}, raw_bytes(m)});
}

void TensorArchive::add(const std::string& name, const MatD& m) {
  put({name, "f64", {m.rows(), m.cols()}, raw_bytes(m)});
}

const TensorArchive::Entry& TensorArchive::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  fail(ErrorKind::kCheckpoint, "archive has no tensor '" + name + "'");
}

bool TensorArchive::has(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::int64_t> TensorArchive::shape(const std::string& name) const { return find(name).shape; }

std::string TensorArchive::dtype(const std::string& name) const { return find(name).dtype; }

MatF TensorArchive::get_f32(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype == "f32") return from_bytes<float>(e.bytes, e.shape);
  return from_bytes<double>(e.bytes, e.shape).cast<float>();
}

MatD TensorArchive::get_f64(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype == "f64") return from_bytes<double>(e.bytes, e.shape);
  return from_bytes<float>(e.bytes, e.shape).cast<double>();
}

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["metadata"] = metadata;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    manifest["tensors"].push_back(
        {{"name", e.name}, {"dtype", e.dtype}, {"shape", e.shape}, {"offset", offset}, {"bytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string text = manifest.dump();
  std::string header(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(header, kVersion);
  put_le<std::uint64_t>(header, text.size());

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : entries_) {
      out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    }
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::kIo, "cannot move archive into place at " + path.string() + ": " + ec.message());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open archive " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string p = path.string();
  require(blob.size() >= sizeof kMagic && std::memcmp(blob.data(), kMagic, sizeof kMagic) == 0,
          ErrorKind::kFormat, "not a tensor archive (bad magic): " + p);
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(blob, pos, p);
  require(version == kVersion, ErrorKind::kFormat,
          "unsupported archive version " + std::to_string(version) + ": " + p);
  const auto len = get_le<std::uint64_t>(blob, pos, p);
  require(pos + len <= blob.size(), ErrorKind::kFormat, "truncated archive manifest: " + p);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.begin() + static_cast<std::ptrdiff_t>(pos),
                                     blob.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "corrupt archive manifest in " + p + ": " + e.what());
  }
  const std::size_t payload = pos + len;

  TensorArchive a;
  try {
    a.metadata = manifest.at("metadata");
    for (const auto& t : manifest.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = t.at("dtype").get<std::string>();
      e.shape = t.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto bytes = t.at("bytes").get<std::uint64_t>();
      require(e.dtype == "f32" || e.dtype == "f64", ErrorKind::kFormat,
              "tensor '" + e.name + "' has unknown dtype " + e.dtype);
      std::int64_t count = 1;
      for (auto d : e.shape) {
        require(d >= 0, ErrorKind::kFormat, "tensor '" + e.name + "' has a negative dimension");
        count *= d;
      }
      require(e.shape.size() <= 2, ErrorKind::kFormat, "tensor '" + e.name + "' has rank above 2");
      const std::uint64_t width = e.dtype == "f32" ? 4 : 8;
      require(bytes == static_cast<std::uint64_t>(count) * width, ErrorKind::kFormat,
              "tensor '" + e.name + "' byte count disagrees with its shape");
      require(payload + offset + bytes <= blob.size(), ErrorKind::kFormat,
              "tensor '" + e.name + "' runs past the end of " + p);
      e.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(payload + offset),
                     blob.begin() + static_cast<std::ptrdiff_t>(payload + offset + bytes));
      a.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "corrupt archive manifest in " + p + ": " + e.what());
  }
  return a;
}

}  // namespace dvton
