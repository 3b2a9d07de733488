#include "dvton/codec.hpp"

#include <algorithm>
#include <cstdio>

#include "dvton/error.hpp"
#include "dvton/rng.hpp"

namespace dvton {

std::string to_string(CodecMode mode) {
  return mode == CodecMode::kPixelPatch ? "pixel-patch" : "learned";
}

CodecMode codec_mode_from_string(const std::string& s) {
  if (s == "pixel-patch") return CodecMode::kPixelPatch;
  if (s == "learned") return CodecMode::kLearned;
  fail(ErrorKind::kInvalidArgument, "unknown codec mode '" + s + "'");
}

void CodecConfig::validate() const {
  require(factor >= 1, ErrorKind::kInvalidArgument, "codec factor must be >= 1");
  require(channels >= 1, ErrorKind::kInvalidArgument, "codec channels must be >= 1");
  if (mode == CodecMode::kPixelPatch) {
    require(channels == patch_values(), ErrorKind::kInvalidArgument,
            "pixel-patch codec needs channels = 3 * factor^2 = " +
                std::to_string(patch_values()));
  } else {
    require(channels <= patch_values(), ErrorKind::kInvalidArgument,
            "learned codec channels cannot exceed 3 * factor^2");
  }
}

Codec::Matrix seeded_orthonormal(int n, std::uint64_t seed) {
  RandomStream rng(seed);
  Codec::Matrix g(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Codec::Matrix> qr(g);
  Codec::Matrix q = qr.householderQ();
  const Codec::Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Make the factorization unique: diag(R) > 0.
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  }
  return q;
}

Codec::Codec(const CodecConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  require(cfg_.mode == CodecMode::kPixelPatch, ErrorKind::kInvalidArgument,
          "learned codec must be fitted or loaded with weights");
  const int n = cfg_.channels;
  mixing_ = cfg_.mixing_seed ? seeded_orthonormal(n, *cfg_.mixing_seed) : Matrix::Identity(n, n);
  mean_ = Eigen::VectorXd::Zero(n);
}

Codec::Codec(const CodecConfig& cfg, Matrix basis, Eigen::VectorXd mean)
    : cfg_(cfg), mixing_(std::move(basis)), mean_(std::move(mean)) {
  cfg_.validate();
  const int rows = cfg_.mode == CodecMode::kPixelPatch ? cfg_.channels : cfg_.patch_values();
  require(mixing_.rows() == rows && mixing_.cols() == cfg_.channels, ErrorKind::kShapeMismatch,
          "codec weights do not match codec config");
  require(mean_.size() == cfg_.patch_values(), ErrorKind::kShapeMismatch,
          "codec mean does not match codec config");
}

namespace {

// Gathers the f x f x 3 patch at latent cell (r, c) in (dr, dc, ch) order.
void gather_patch(const Image& img, int f, int r, int c, Eigen::VectorXd& v) {
  int k = 0;
  for (int dr = 0; dr < f; ++dr) {
    for (int dc = 0; dc < f; ++dc) {
      for (int ch = 0; ch < Image::kChannels; ++ch) v[k++] = img.at(r * f + dr, c * f + dc, ch);
    }
  }
}

void scatter_patch(Image& img, int f, int r, int c, const Eigen::VectorXd& v) {
  int k = 0;
  for (int dr = 0; dr < f; ++dr) {
    for (int dc = 0; dc < f; ++dc) {
      for (int ch = 0; ch < Image::kChannels; ++ch) {
        img.at(r * f + dr, c * f + dc, ch) = static_cast<float>(v[k++]);
      }
    }
  }
}

}  // namespace

Codec Codec::fit_learned(const CodecConfig& cfg, std::span<const Image> images) {
  require(cfg.mode == CodecMode::kLearned, ErrorKind::kInvalidArgument,
          "fit_learned requires learned mode");
  cfg.validate();
  require(!images.empty(), ErrorKind::kInvalidArgument, "fit_learned: no training images");
  const int f = cfg.factor;
  const int n = cfg.patch_values();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Matrix scatter = Matrix::Zero(n, n);
  Eigen::VectorXd v(n);
  std::size_t count = 0;
  for (const Image& img : images) {
    require(img.height % f == 0 && img.width % f == 0, ErrorKind::kShapeMismatch,
            "fit_learned: image extent not divisible by factor");
    for (int r = 0; r < img.height / f; ++r) {
      for (int c = 0; c < img.width / f; ++c) {
        gather_patch(img, f, r, c, v);
        sum += v;
        scatter.noalias() += v * v.transpose();
        ++count;
      }
    }
  }
  const Eigen::VectorXd mean = sum / static_cast<double>(count);
  const Matrix cov = scatter / static_cast<double>(count) - mean * mean.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  // Eigenvalues ascend; keep the top `channels` directions.
  Matrix basis(n, cfg.channels);
  for (int k = 0; k < cfg.channels; ++k) {
    Eigen::VectorXd col = eig.eigenvectors().col(n - 1 - k);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    basis.col(k) = col;
  }
  return Codec(cfg, std::move(basis), mean);
}

LatentGrid Codec::encode(const Image& img) const {
  const int f = cfg_.factor;
  require(img.height % f == 0 && img.width % f == 0, ErrorKind::kShapeMismatch,
          "encode: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
              " not divisible by factor " + std::to_string(f));
  LatentGrid lat(img.height / f, img.width / f, cfg_.channels);
  Eigen::VectorXd v(cfg_.patch_values());
  Eigen::VectorXd z(cfg_.channels);
  for (int r = 0; r < lat.h; ++r) {
    for (int c = 0; c < lat.w; ++c) {
      gather_patch(img, f, r, c, v);
      if (cfg_.mode == CodecMode::kPixelPatch) {
        z.noalias() = mixing_ * v;
      } else {
        z.noalias() = mixing_.transpose() * (v - mean_);
      }
      for (int ch = 0; ch < cfg_.channels; ++ch) lat.at(r, c, ch) = static_cast<float>(z[ch]);
    }
  }
  return lat;
}

Image Codec::decode_unclamped(const LatentGrid& lat) const {
  require(lat.c == cfg_.channels, ErrorKind::kShapeMismatch,
          "decode: latent has " + std::to_string(lat.c) + " channels, codec expects " +
              std::to_string(cfg_.channels));
  const int f = cfg_.factor;
  Image img(lat.h * f, lat.w * f);
  Eigen::VectorXd z(cfg_.channels);
  Eigen::VectorXd v(cfg_.patch_values());
  for (int r = 0; r < lat.h; ++r) {
    for (int c = 0; c < lat.w; ++c) {
      for (int ch = 0; ch < cfg_.channels; ++ch) z[ch] = lat.at(r, c, ch);
      if (cfg_.mode == CodecMode::kPixelPatch) {
        v.noalias() = mixing_.transpose() * z;
      } else {
        v.noalias() = mixing_ * z + mean_;
      }
      scatter_patch(img, f, r, c, v);
    }
  }
  return img;
}

Image Codec::decode(const LatentGrid& lat) const {
  Image img = decode_unclamped(lat);
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

LatentCache::LatentCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::uint64_t LatentCache::key(const Codec& codec, const Image& img) const {
  const CodecConfig& cfg = codec.config();
  std::uint64_t h = fnv1a(img.data.data(), img.data.size() * sizeof(float));
  const std::int64_t fields[5] = {img.height, img.width, cfg.factor, cfg.channels,
                                  static_cast<std::int64_t>(cfg.mode)};
  h = fnv1a(fields, sizeof(fields), h);
  h = fnv1a(codec.mixing().data(), codec.mixing().size() * sizeof(double), h);
  return fnv1a(codec.mean().data(), codec.mean().size() * sizeof(double), h);
}

LatentGrid LatentCache::encode(const Codec& codec, const Image& img) {
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.lat",
                static_cast<unsigned long long>(key(codec, img)));
  const auto path = dir_ / name;
  if (std::filesystem::exists(path)) {
    ++hits_;
    return read_latent(path);
  }
  LatentGrid lat = codec.encode(img);
  write_latent(path, lat);
  return lat;
}

}  // namespace dvton
