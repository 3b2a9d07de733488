#include "dvton/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "dvton/archive.hpp"
#include "dvton/error.hpp"
#include "dvton/imaging.hpp"
#include "dvton/parallel.hpp"
#include "dvton/rng.hpp"

namespace dvton {

namespace {

constexpr int kWindow = 7;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// (h+1) x (w+1) inclusive prefix sums.
MatD integral(const Image& img, int ch, const Image* other, int other_ch) {
  MatD s = MatD::Zero(img.height + 1, img.width + 1);
  for (int r = 0; r < img.height; ++r) {
    double row = 0.0;
    for (int c = 0; c < img.width; ++c) {
      const double v = other ? static_cast<double>(img.at(r, c, ch)) * other->at(r, c, other_ch)
                             : static_cast<double>(img.at(r, c, ch));
      row += v;
      s(r + 1, c + 1) = s(r, c + 1) + row;
    }
  }
  return s;
}

double box(const MatD& s, int r, int c) {
  return s(r + kWindow, c + kWindow) - s(r, c + kWindow) - s(r + kWindow, c) + s(r, c);
}

MatD covariance(const MatD& x, Eigen::RowVectorXd& mean) {
  mean = x.colwise().mean();
  const MatD centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

void check_pair(const FeatureSet& x, const FeatureSet& y) {
  require(x.k() == y.k(), ErrorKind::kShapeMismatch,
          "feature dimension mismatch: " + std::to_string(x.k()) + " vs " + std::to_string(y.k()));
  require(x.n() >= 2 && y.n() >= 2, ErrorKind::kInvalidArgument,
          "FID/KID need at least 2 samples per set");
  require(x.data.allFinite() && y.data.allFinite(), ErrorKind::kNumeric, "non-finite features");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ProjectionExtractor::ProjectionExtractor(const Options& opts) : opts_(opts) {
  require(opts.grid >= 1 && opts.k >= 1, ErrorKind::kInvalidArgument, "extractor grid and k must be positive");
  const int dim = 3 * opts.grid * opts.grid;
  require(opts.k <= dim, ErrorKind::kInvalidArgument, "extractor k exceeds the flattened dimension");
  RandomStream rng = RandomStream::named(opts.seed, "feature-projection");
  MatD g(dim, opts.k);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<MatD> qr(g);
  projection_ = qr.householderQ() * MatD::Identity(dim, opts.k);
  // Fix signs so the projection is unique for a seed.
  const MatD r = qr.matrixQR().topRows(opts.k).triangularView<Eigen::Upper>();
  for (int j = 0; j < opts.k; ++j) {
    if (r(j, j) < 0.0) projection_.col(j) *= -1.0;
  }
}

std::string ProjectionExtractor::name() const {
  return "projection(grid=" + std::to_string(opts_.grid) + ",k=" + std::to_string(opts_.k) +
         ",seed=" + std::to_string(opts_.seed) + ")";
}

Eigen::VectorXd ProjectionExtractor::flatten(const Image& img) const {
  require(!img.empty(), ErrorKind::kInvalidArgument, "cannot extract features from an empty image");
  Image src = img;
  if (opts_.clamp) {
    for (float& v : src.data) v = std::clamp(v, 0.0f, 1.0f);
  }
  const int g = opts_.grid;
  const int side = std::max(src.height, src.width);
  const int block = (side + g - 1) / g;
  const Image sq = pad_resize(src, block * g);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * g * g);
  const double inv = 1.0 / (static_cast<double>(block) * block);
  for (int r = 0; r < sq.height; ++r) {
    for (int c = 0; c < sq.width; ++c) {
      const int base = ((r / block) * g + c / block) * 3;
      for (int ch = 0; ch < 3; ++ch) out[base + ch] += sq.at(r, c, ch) * inv;
    }
  }
  return out;
}

FeatureSet ProjectionExtractor::extract(const std::vector<Image>& images) const {
  require(!images.empty(), ErrorKind::kInvalidArgument, "feature extraction needs at least one image");
  MatD flat(static_cast<Eigen::Index>(images.size()), projection_.rows());
  parallel_for(static_cast<int>(images.size()), default_threads(),
               [&](int i) { flat.row(i) = flatten(images[i]).transpose(); });
  FeatureSet fs;
  fs.data = (flat * projection_).cast<float>();
  return fs;
}

FeatureSet extract_features(const std::vector<Image>& images, const FeatureExtractor& extractor) {
  require(!images.empty(), ErrorKind::kInvalidArgument, "feature extraction needs at least one image");
  return extractor.extract(images);
}

void write_features(const std::filesystem::path& path, const FeatureSet& features) {
  TensorArchive a;
  a.metadata["kind"] = "features";
  a.add("features", features.data);
  a.save(path);
}

FeatureSet read_features(const std::filesystem::path& path) {
  const TensorArchive a = TensorArchive::load(path);
  require(a.has("features"), ErrorKind::kFormat, "feature file has no 'features' tensor: " + path.string());
  FeatureSet fs;
  fs.data = a.get_f32("features");
  return fs;
}

double ssim(const Image& a, const Image& b) {
  require(a.height == b.height && a.width == b.width, ErrorKind::kShapeMismatch,
          "ssim extent mismatch: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
              std::to_string(b.height) + "x" + std::to_string(b.width));
  require(a.height >= kWindow && a.width >= kWindow, ErrorKind::kInvalidArgument,
          "ssim needs images of at least 7x7");
  const double n = kWindow * kWindow;
  const int rows = a.height - kWindow + 1;
  const int cols = a.width - kWindow + 1;
  double total = 0.0;
  for (int ch = 0; ch < Image::kChannels; ++ch) {
    const MatD sa = integral(a, ch, nullptr, 0);
    const MatD sb = integral(b, ch, nullptr, 0);
    const MatD saa = integral(a, ch, &a, ch);
    const MatD sbb = integral(b, ch, &b, ch);
    const MatD sab = integral(a, ch, &b, ch);
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double ma = box(sa, r, c) / n;
        const double mb = box(sb, r, c) / n;
        const double va = (box(saa, r, c) - n * ma * ma) / (n - 1);
        const double vb = (box(sbb, r, c) - n * mb * mb) / (n - 1);
        const double cov = (box(sab, r, c) - n * ma * mb) / (n - 1);
        acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      }
    }
    total += acc / (static_cast<double>(rows) * cols);
  }
  return total / Image::kChannels;
}

double fid(const FeatureSet& x, const FeatureSet& y) {
  check_pair(x, y);
  const MatD xd = x.data.cast<double>();
  const MatD yd = y.data.cast<double>();
  Eigen::RowVectorXd mx;
  Eigen::RowVectorXd my;
  const MatD sx = covariance(xd, mx);
  const MatD sy = covariance(yd, my);

  Eigen::SelfAdjointEigenSolver<MatD> ex(sx);
  const Eigen::VectorXd lx = ex.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatD root_x = ex.eigenvectors() * lx.asDiagonal() * ex.eigenvectors().transpose();
  MatD prod = root_x * sy * root_x;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<MatD> ep(prod, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ep.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double d = (mx - my).squaredNorm() + sx.trace() + sy.trace() - 2.0 * tr_sqrt;
  require(std::isfinite(d), ErrorKind::kNumeric, "fid is not finite");
  return std::max(d, 0.0);
}

double polynomial_kernel(const float* x, const float* y, int k) {
  double dot = 0.0;
  for (int i = 0; i < k; ++i) dot += static_cast<double>(x[i]) * y[i];
  const double base = dot / k + 1.0;
  return base * base * base;
}

double kid(const FeatureSet& x, const FeatureSet& y) {
  check_pair(x, y);
  const double k = x.k();
  const MatD xd = x.data.cast<double>();
  const MatD yd = y.data.cast<double>();
  auto kernel = [k](const MatD& a, const MatD& b) {
    return MatD(((a * b.transpose()).array() / k + 1.0).cube());
  };
  const MatD kxx = kernel(xd, xd);
  const MatD kyy = kernel(yd, yd);
  const MatD kxy = kernel(xd, yd);
  const double m = x.n();
  const double n = y.n();
  const double sxx = (kxx.sum() - kxx.trace()) / (m * (m - 1));
  const double syy = (kyy.sum() - kyy.trace()) / (n * (n - 1));
  const double sxy = kxy.sum() / (m * n);
  const double v = sxx + syy - 2.0 * sxy;
  require(std::isfinite(v), ErrorKind::kNumeric, "kid is not finite");
  return v;
}

bool MetricReport::has(const std::string& name) const {
  return std::any_of(metrics.begin(), metrics.end(), [&](const auto& m) { return m.first == name; });
}

double MetricReport::value(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  fail(ErrorKind::kInvalidArgument, "report has no metric '" + name + "'");
}

void MetricReport::set(const std::string& name, double v) {
  for (auto& [k, old] : metrics) {
    if (k == name) {
      old = v;
      return;
    }
  }
  metrics.emplace_back(name, v);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["config_hash"] = config_hash;
  j["split_id"] = split_id;
  j["n"] = n;
  j["kid_scale"] = kKidReportScale;
  j["metrics"] = nlohmann::json::array();
  for (const auto& [k, v] : metrics) j["metrics"].push_back({{"name", k}, {"value", v}});
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.split_id = j.at("split_id").get<std::string>();
    r.n = j.at("n").get<int>();
    for (const auto& m : j.at("metrics")) r.metrics.emplace_back(m.at("name"), m.at("value"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed metric report: ") + e.what());
  }
  return r;
}

void MetricReport::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write report " + path.string());
  out << to_json().dump(2) << "\n";
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

MetricReport evaluate_features(const FeatureSet& generated, const FeatureSet& reference) {
  MetricReport r;
  r.n = generated.n();
  r.set("fid", fid(generated, reference));
  r.set("kid", kid(generated, reference) * kKidReportScale);
  return r;
}

MetricReport evaluate_run(const std::vector<Image>& generated, const std::vector<SamplePair>& split,
                          const FeatureExtractor& extractor, SplitMode mode) {
  require(!generated.empty(), ErrorKind::kInvalidArgument, "no generated images to evaluate");
  require(generated.size() == split.size(), ErrorKind::kShapeMismatch,
          "generated count " + std::to_string(generated.size()) + " differs from split size " +
              std::to_string(split.size()));
  std::vector<Image> real;
  real.reserve(split.size());
  for (const auto& p : split) {
    if (mode == SplitMode::kPaired) {
      require(p.target.has_value(), ErrorKind::kInvalidArgument,
              "paired evaluation needs targets; pair '" + p.name + "' has none");
      real.push_back(*p.target);
    } else {
      real.push_back(p.source);
    }
  }

  MetricReport r;
  r.n = static_cast<int>(generated.size());
  r.split_id = hex64(split_hash(split));
  if (mode == SplitMode::kPaired) {
    std::vector<double> scores(generated.size());
    parallel_for(static_cast<int>(generated.size()), default_threads(),
                 [&](int i) { scores[i] = ssim(generated[i], real[i]); });
    double sum = 0.0;
    for (double s : scores) sum += s;
    r.set("ssim", sum / static_cast<double>(scores.size()));
  }
  if (generated.size() >= 2) {
    const FeatureSet fg = extract_features(generated, extractor);
    const FeatureSet fr = extract_features(real, extractor);
    r.set("fid", fid(fg, fr));
    r.set("kid", kid(fg, fr) * kKidReportScale);
  } else {
    require(mode == SplitMode::kPaired, ErrorKind::kInvalidArgument,
            "unpaired evaluation needs at least 2 images");
  }
  return r;
}

}  // namespace dvton
