#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dvton/data.hpp"
#include "dvton/image.hpp"
#include "dvton/tensor.hpp"

namespace dvton {

// n x k feature rows.
struct FeatureSet {
  MatF data;
  int n() const { return static_cast<int>(data.rows()); }
  int k() const { return static_cast<int>(data.cols()); }
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureSet extract(const std::vector<Image>& images) const = 0;
  virtual std::string name() const = 0;
};

// Pads to square, area-downsamples to grid x grid, flattens (HWC) and projects
// onto k seeded orthonormal directions.
class ProjectionExtractor : public FeatureExtractor {
 public:
  struct Options {
    int grid = 16;
    int k = 64;
    std::uint64_t seed = 0xfea7;
    bool clamp = true;  // clamp pixels to [0, 1] before downsampling
  };

  ProjectionExtractor() : ProjectionExtractor(Options{}) {}
  explicit ProjectionExtractor(const Options& opts);

  FeatureSet extract(const std::vector<Image>& images) const override;
  std::string name() const override;
  const MatD& projection() const { return projection_; }
  // Downsampled, flattened pixels of one image (length 3 * grid^2).
  Eigen::VectorXd flatten(const Image& img) const;

 private:
  Options opts_;
  MatD projection_;  // (3 grid^2) x k, orthonormal columns
};

FeatureSet extract_features(const std::vector<Image>& images, const FeatureExtractor& extractor);

// Feature files use the tensor-archive format with one tensor "features".
void write_features(const std::filesystem::path& path, const FeatureSet& features);
FeatureSet read_features(const std::filesystem::path& path);

// Mean SSIM over valid 7x7 uniform windows, per channel then averaged.
double ssim(const Image& a, const Image& b);

double fid(const FeatureSet& x, const FeatureSet& y);
// Unbiased MMD^2 with kernel (x.y / k + 1)^3; raw scale.
double kid(const FeatureSet& x, const FeatureSet& y);
double polynomial_kernel(const float* x, const float* y, int k);

inline constexpr double kKidReportScale = 1000.0;

struct MetricReport {
  std::string run_id;
  std::string config_hash;
  std::string split_id;
  int n = 0;
  std::vector<std::pair<std::string, double>> metrics;  // insertion order

  bool has(const std::string& name) const;
  double value(const std::string& name) const;
  void set(const std::string& name, double v);

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
};

// Paired: "ssim" vs targets, plus "fid"/"kid" vs targets when n >= 2.
// Unpaired: "fid" and "kid" against the source images. "kid" is scaled by
// kKidReportScale.
MetricReport evaluate_run(const std::vector<Image>& generated, const std::vector<SamplePair>& split,
                          const FeatureExtractor& extractor, SplitMode mode);

// FID/KID rows from precomputed features.
MetricReport evaluate_features(const FeatureSet& generated, const FeatureSet& reference);

}  // namespace dvton
