#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvton/image.hpp"
#include "dvton/latent.hpp"

namespace dvton {

enum class CodecMode {
  kPixelPatch,  // exact space-to-depth plus orthonormal channel mixing
  kLearned,     // linear autoencoder fitted to image patches
};

std::string to_string(CodecMode mode);
CodecMode codec_mode_from_string(const std::string& s);

struct CodecConfig {
  int factor = 2;
  int channels = 12;
  CodecMode mode = CodecMode::kPixelPatch;
  // Seed of the orthonormal mixing; nullopt selects the identity.
  std::optional<std::uint64_t> mixing_seed = 0x5eed;

  int patch_values() const { return 3 * factor * factor; }
  void validate() const;
  bool operator==(const CodecConfig&) const = default;
};

// The single shared encoder E and its decoder. Immutable after construction.
class Codec {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

  // Pixel-patch codec; mixing generated from the config seed.
  explicit Codec(const CodecConfig& cfg);

  // Learned codec from explicit weights: basis is (3 f^2) x c with orthonormal
  // columns, mean is the per-value patch mean.
  Codec(const CodecConfig& cfg, Matrix basis, Eigen::VectorXd mean);

  // Fits the learned mode: principal patch directions of the training images.
  static Codec fit_learned(const CodecConfig& cfg, std::span<const Image> images);

  LatentGrid encode(const Image& img) const;
  // Clamped to [0, 1].
  Image decode(const LatentGrid& lat) const;
  // Decode without the final clamp.
  Image decode_unclamped(const LatentGrid& lat) const;

  const CodecConfig& config() const { return cfg_; }
  // Pixel-patch: c x c mixing. Learned: (3 f^2) x c basis.
  const Matrix& mixing() const { return mixing_; }
  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  CodecConfig cfg_;
  Matrix mixing_;
  Eigen::VectorXd mean_;
};

// Orthonormal matrix from QR of a seeded Gaussian matrix (sign-normalized).
Codec::Matrix seeded_orthonormal(int n, std::uint64_t seed);

// On-disk cache of encoded latents keyed by image content and codec config.
class LatentCache {
 public:
  explicit LatentCache(std::filesystem::path dir);

  LatentGrid encode(const Codec& codec, const Image& img);
  std::uint64_t key(const Codec& codec, const Image& img) const;
  std::size_t hits() const { return hits_; }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
};

}  // namespace dvton
