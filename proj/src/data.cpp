#include "dvton/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dvton/error.hpp"
#include "dvton/imaging.hpp"
#include "dvton/parallel.hpp"

namespace dvton {

namespace fs = std::filesystem;

namespace {

constexpr Color kReferenceBackdrop{0.94f, 0.94f, 0.94f};
constexpr Color kJointColor{1.0f, 1.0f, 0.0f};
// neck, shoulders, left flank, right flank, hips
constexpr std::array<Color, 5> kLimbColors{{
    {1.0f, 0.0f, 0.0f},
    {1.0f, 0.5f, 0.0f},
    {0.0f, 1.0f, 0.0f},
    {0.0f, 0.5f, 1.0f},
    {1.0f, 0.0f, 1.0f},
}};

struct Vec2 {
  double x;
  double y;
};

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double s = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return std::hypot(p.x - (a.x + s * dx), p.y - (a.y + s * dy));
}

// Garment outline in a local, unrotated frame.
struct GarmentOutline {
  double cx, top, bottom, top_half, bottom_half;

  double half_width(double v) const { return top_half + (bottom_half - top_half) * v; }

  // (u, v) in [0, 1]^2 when inside.
  bool local(Vec2 p, double& u, double& v) const {
    if (p.y < top || p.y >= bottom) return false;
    v = (p.y - top) / (bottom - top);
    const double hw = half_width(v);
    if (std::abs(p.x - cx) >= hw) return false;
    u = (p.x - (cx - hw)) / (2.0 * hw);
    return true;
  }
};

GarmentOutline outline(GarmentShape shape, double cx, double top, double bottom, double half) {
  if (shape == GarmentShape::kRect) return {cx, top, bottom, half, half};
  return {cx, top, bottom, 0.9 * half, 1.25 * half};
}

Color pattern_color(const GarmentDescriptor& g, double u, double v) {
  bool on = false;
  switch (g.pattern) {
    case GarmentPattern::kSolid:
      break;
    case GarmentPattern::kStripes:
      on = static_cast<int>(std::floor(v * 6.0)) % 2 == 1;
      break;
    case GarmentPattern::kDots: {
      const double fu = u * 4.0 - std::floor(u * 4.0) - 0.5;
      const double fv = v * 5.0 - std::floor(v * 5.0) - 0.5;
      on = fu * fu + fv * fv < 0.25 * 0.25;
      break;
    }
    case GarmentPattern::kGlyph:
      on = (std::abs(u - 0.5) < 0.09 && v > 0.25 && v < 0.8) ||
           (std::abs(v - 0.32) < 0.07 && u > 0.28 && u < 0.72);
      break;
  }
  return on ? g.pattern_color : g.base;
}

enum class Layer { kBackground, kLegs, kTorso, kGarment, kArms, kNeck, kHead };

class Figure {
 public:
  explicit Figure(const SynthSpec& spec) : spec_(spec) {
    const double s = spec.size;
    const auto& p = spec.pose;
    cx_ = p.center_x * s;
    sy_ = p.shoulder_y * s;
    hy_ = p.hip_y * s;
    shw_ = p.shoulder_half_width * s;
    hhw_ = p.hip_half_width * s;
    cos_ = std::cos(p.lean);
    sin_ = std::sin(p.lean);
    garment_ = outline(spec.garment.shape, cx_, sy_ - 0.01 * s, hy_ + 0.02 * s, shw_);
    const double arm = 0.3 * s;
    lhand_ = {cx_ - shw_ - arm * std::sin(p.left_arm_angle), sy_ + arm * std::cos(p.left_arm_angle)};
    rhand_ = {cx_ + shw_ + arm * std::sin(p.right_arm_angle), sy_ + arm * std::cos(p.right_arm_angle)};
  }

  // Local (unleaned) frame to image frame.
  Vec2 to_image(Vec2 l) const {
    const double dx = l.x - cx_;
    const double dy = l.y - hy_;
    return {cx_ + cos_ * dx - sin_ * dy, hy_ + sin_ * dx + cos_ * dy};
  }

  Vec2 to_local(Vec2 q) const {
    const double dx = q.x - cx_;
    const double dy = q.y - hy_;
    return {cx_ + cos_ * dx + sin_ * dy, hy_ - sin_ * dx + cos_ * dy};
  }

  Layer layer_at(Vec2 q, bool with_garment, double& u, double& v) const {
    const double s = spec_.size;
    const Vec2 p = to_local(q);
    const Vec2 head = head_center();
    if (std::hypot(p.x - head.x, p.y - head.y) < 0.08 * s) return Layer::kHead;
    if (std::abs(p.x - cx_) < 0.03 * s && p.y >= sy_ - 0.06 * s && p.y < sy_) return Layer::kNeck;
    const double arm_r = 0.035 * s;
    if (segment_distance(p, {cx_ - shw_, sy_}, lhand_) < arm_r ||
        segment_distance(p, {cx_ + shw_, sy_}, rhand_) < arm_r) {
      return Layer::kArms;
    }
    if (with_garment && garment_.local(p, u, v)) return Layer::kGarment;
    if (p.y >= sy_ && p.y < hy_) {
      const double t = (p.y - sy_) / (hy_ - sy_);
      if (std::abs(p.x - cx_) < shw_ + (hhw_ - shw_) * t) return Layer::kTorso;
    }
    const double leg_r = 0.045 * s;
    if (p.y >= hy_ && p.y < 0.97 * s &&
        (std::abs(p.x - (cx_ - 0.5 * hhw_)) < leg_r || std::abs(p.x - (cx_ + 0.5 * hhw_)) < leg_r)) {
      return Layer::kLegs;
    }
    return Layer::kBackground;
  }

  Vec2 head_center() const { return {cx_, sy_ - 0.12 * spec_.size}; }

  Skeleton skeleton() const {
    Skeleton k;
    auto j = [&](Vec2 l) {
      const Vec2 q = to_image(l);
      return Joint{q.x, q.y};
    };
    k.head = j(head_center());
    k.left_shoulder = j({cx_ - shw_, sy_});
    k.right_shoulder = j({cx_ + shw_, sy_});
    k.left_hip = j({cx_ - hhw_, hy_});
    k.right_hip = j({cx_ + hhw_, hy_});
    return k;
  }

  Image draw(bool with_garment, Mask* garment_mask) const {
    const int n = spec_.size;
    Image img(n, n);
    if (garment_mask) *garment_mask = Mask(n, n, 1);
    for (int r = 0; r < n; ++r) {
      const float t = (static_cast<float>(r) + 0.5f) / static_cast<float>(n);
      const auto& bg = spec_.background;
      const Color back{bg.top.r + (bg.bottom.r - bg.top.r) * t, bg.top.g + (bg.bottom.g - bg.top.g) * t,
                       bg.top.b + (bg.bottom.b - bg.top.b) * t};
      for (int c = 0; c < n; ++c) {
        double u = 0.0;
        double v = 0.0;
        Color col = back;
        switch (layer_at({c + 0.5, r + 0.5}, with_garment, u, v)) {
          case Layer::kHead:
          case Layer::kNeck:
          case Layer::kArms:
          case Layer::kTorso:
            col = spec_.skin;
            break;
          case Layer::kLegs:
            col = spec_.legs;
            break;
          case Layer::kGarment:
            col = pattern_color(spec_.garment, u, v);
            if (garment_mask) garment_mask->at(r, c) = 0;
            break;
          case Layer::kBackground:
            break;
        }
        img.at(r, c, 0) = col.r;
        img.at(r, c, 1) = col.g;
        img.at(r, c, 2) = col.b;
      }
    }
    return img;
  }

 private:
  const SynthSpec& spec_;
  double cx_, sy_, hy_, shw_, hhw_, cos_, sin_;
  GarmentOutline garment_;
  Vec2 lhand_, rhand_;
};

Color random_color(RandomStream& rng, double lo, double hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

void put(Image& img, int r, int c, Color col) {
  img.at(r, c, 0) = col.r;
  img.at(r, c, 1) = col.g;
  img.at(r, c, 2) = col.b;
}

std::string pair_stem(int index, int variant) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d_%02d", index, variant);
  return buf;
}

void hash_image(std::uint64_t& h, const Image& img) {
  h = fnv1a(&img.height, sizeof img.height, h);
  h = fnv1a(&img.width, sizeof img.width, h);
  h = fnv1a(img.data.data(), img.data.size() * sizeof(float), h);
}

}  // namespace

bool SamplePair::valid() const {
  const int h = source.height;
  const int w = source.width;
  auto same = [&](const Image& img) { return img.height == h && img.width == w && img.valid(); };
  if (!same(source) || !same(reference) || !same(pose.image)) return false;
  if (target && !same(*target)) return false;
  if (mask.height != h || mask.width != w || mask.data.size() != static_cast<std::size_t>(h) * w) {
    return false;
  }
  return mask.edit_count() > 0;
}

std::string to_string(SplitMode m) { return m == SplitMode::kPaired ? "paired" : "unpaired"; }

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "paired") return SplitMode::kPaired;
  if (s == "unpaired") return SplitMode::kUnpaired;
  fail(ErrorKind::kInvalidArgument, "unknown split mode '" + s + "' (paired|unpaired)");
}

Skeleton skeleton_of(const SynthSpec& spec) { return Figure(spec).skeleton(); }

GarmentDescriptor random_garment(RandomStream& rng) {
  GarmentDescriptor g;
  g.shape = rng.below(2) == 0 ? GarmentShape::kRect : GarmentShape::kTrapezoid;
  g.base = random_color(rng, 0.05, 0.95);
  g.pattern = static_cast<GarmentPattern>(rng.below(4));
  g.pattern_color = random_color(rng, 0.05, 0.95);
  const float dist = std::abs(g.base.r - g.pattern_color.r) + std::abs(g.base.g - g.pattern_color.g) +
                     std::abs(g.base.b - g.pattern_color.b);
  if (dist < 0.6f) g.pattern_color = {1.0f - g.base.r, 1.0f - g.base.g, 1.0f - g.base.b};
  return g;
}

SynthSpec random_spec(RandomStream& rng, int size) {
  require(size >= 8, ErrorKind::kInvalidArgument, "synthetic image size must be at least 8");
  SynthSpec s;
  s.size = size;
  s.pose.center_x = rng.uniform(0.42, 0.58);
  s.pose.shoulder_y = rng.uniform(0.33, 0.40);
  s.pose.hip_y = rng.uniform(0.68, 0.74);
  s.pose.shoulder_half_width = rng.uniform(0.13, 0.18);
  s.pose.hip_half_width = rng.uniform(0.10, 0.13);
  s.pose.lean = rng.uniform(-0.12, 0.12);
  s.pose.left_arm_angle = rng.uniform(0.05, 0.7);
  s.pose.right_arm_angle = rng.uniform(0.05, 0.7);
  s.garment = random_garment(rng);
  s.background.top = random_color(rng, 0.55, 1.0);
  s.background.bottom = random_color(rng, 0.55, 1.0);
  const float tone = static_cast<float>(rng.uniform(0.45, 0.9));
  s.skin = {tone, tone * 0.78f, tone * 0.62f};
  s.legs = random_color(rng, 0.08, 0.4);
  s.seed = rng.next_u64();
  return s;
}

Image render_without_garment(const SynthSpec& spec) { return Figure(spec).draw(false, nullptr); }

Image render_reference(const GarmentDescriptor& garment, int size) {
  Image img(size, size);
  const double s = size;
  const GarmentOutline o = outline(garment.shape, 0.5 * s, 0.15 * s, 0.85 * s, 0.3 * s);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double u = 0.0;
      double v = 0.0;
      put(img, r, c, o.local({c + 0.5, r + 0.5}, u, v) ? pattern_color(garment, u, v) : kReferenceBackdrop);
    }
  }
  return img;
}

PoseMap render_pose(const SynthSpec& spec) {
  const int n = spec.size;
  const Skeleton k = skeleton_of(spec);
  const Vec2 head{k.head.x, k.head.y};
  const Vec2 ls{k.left_shoulder.x, k.left_shoulder.y};
  const Vec2 rs{k.right_shoulder.x, k.right_shoulder.y};
  const Vec2 lh{k.left_hip.x, k.left_hip.y};
  const Vec2 rh{k.right_hip.x, k.right_hip.y};
  const Vec2 neck{0.5 * (ls.x + rs.x), 0.5 * (ls.y + rs.y)};
  const std::array<std::pair<Vec2, Vec2>, 5> limbs{{{head, neck}, {ls, rs}, {ls, lh}, {rs, rh}, {lh, rh}}};
  const std::array<Vec2, 5> joints{head, ls, rs, lh, rh};
  const double line_r = std::max(0.75, n / 48.0);
  const double joint_r = 1.6 * line_r;
  PoseMap pose{Image(n, n)};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Vec2 p{c + 0.5, r + 0.5};
      bool done = false;
      for (const auto& j : joints) {
        if (std::hypot(p.x - j.x, p.y - j.y) < joint_r) {
          put(pose.image, r, c, kJointColor);
          done = true;
          break;
        }
      }
      for (std::size_t i = 0; !done && i < limbs.size(); ++i) {
        if (segment_distance(p, limbs[i].first, limbs[i].second) < line_r) {
          put(pose.image, r, c, kLimbColors[i]);
          done = true;
        }
      }
    }
  }
  return pose;
}

SamplePair render(const SynthSpec& spec) {
  require(spec.size >= 8, ErrorKind::kInvalidArgument, "synthetic image size must be at least 8");
  SamplePair pair;
  pair.source = Figure(spec).draw(true, &pair.mask);
  pair.reference = render_reference(spec.garment, spec.size);
  pair.pose = render_pose(spec);
  pair.target = pair.source;
  pair.synth = SynthProvenance{spec, spec.garment};
  return pair;
}

SamplePair render_tryon(const SynthSpec& spec, const GarmentDescriptor& garment) {
  SamplePair pair = render(spec);
  SynthSpec swapped = spec;
  swapped.garment = garment;
  pair.reference = render_reference(garment, spec.size);
  pair.target = Figure(swapped).draw(true, nullptr);
  pair.synth->reference_garment = garment;
  return pair;
}

std::vector<SamplePair> make_split(int n, std::uint64_t seed, SplitMode mode, int size) {
  require(n >= 1, ErrorKind::kInvalidArgument, "split size must be at least 1");
  std::vector<SamplePair> pairs(n);
  parallel_for(n, default_threads(), [&](int i) {
    RandomStream rng = RandomStream::named(splitmix64(seed) + static_cast<std::uint64_t>(i), "synth-item");
    const SynthSpec spec = random_spec(rng, size);
    SamplePair pair = render(spec);
    pair.name = pair_stem(i, 0);
    pair.cloth_name = pair.name;
    if (mode == SplitMode::kUnpaired) {
      GarmentDescriptor other = random_garment(rng);
      while (other == spec.garment) other = random_garment(rng);
      pair.reference = render_reference(other, size);
      pair.target.reset();
      pair.synth->reference_garment = other;
      pair.cloth_name = pair_stem(i, 1);
    }
    pairs[i] = std::move(pair);
  });
  return pairs;
}

std::uint64_t split_hash(const std::vector<SamplePair>& pairs) {
  std::uint64_t h = fnv1a("split");
  for (const auto& p : pairs) {
    h = fnv1a(p.name, h);
    h = fnv1a(p.cloth_name, h);
    hash_image(h, p.source);
    hash_image(h, p.reference);
    h = fnv1a(p.mask.data.data(), p.mask.data.size(), h);
    if (p.target) hash_image(h, *p.target);
  }
  return h;
}

SamplePair augment_mask(const SamplePair& pair, double prob, RandomStream& rng) {
  require(prob >= 0.0 && prob <= 1.0, ErrorKind::kInvalidArgument,
          "mask relaxation probability must lie in [0, 1]");
  SamplePair out = pair;
  if (rng.uniform() < prob) out.mask = relax_mask_to_bbox(pair.mask);
  return out;
}

std::vector<SamplePair> load_vton_layout(const fs::path& root, const LayoutOptions& opts) {
  require(fs::is_directory(root), ErrorKind::kIo, "dataset directory not found: " + root.string());
  const fs::path manifest = root / "pairs.txt";
  std::ifstream in(manifest);
  require(static_cast<bool>(in), ErrorKind::kIo, "missing file: " + manifest.string());

  struct Entry {
    std::string source;
    std::string cloth;
  };
  std::vector<Entry> entries;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    std::vector<std::string> tok;
    for (std::string w; words >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    require(tok.size() == 2, ErrorKind::kFormat,
            manifest.string() + ":" + std::to_string(lineno) + ": expected '<source> <cloth>', got '" +
                line + "'");
    entries.push_back({tok[0], tok[1]});
  }

  auto existing = [](const fs::path& p) {
    require(fs::exists(p), ErrorKind::kIo, "missing file: " + p.string());
    return p;
  };

  std::vector<SamplePair> pairs(entries.size());
  parallel_for(static_cast<int>(entries.size()), default_threads(), [&](int i) {
    const Entry& e = entries[i];
    const std::string stem = fs::path(e.source).stem().string();
    SamplePair p;
    p.name = stem;
    p.cloth_name = fs::path(e.cloth).stem().string();
    p.source = pad_resize(read_image(existing(root / "image" / e.source)), opts.size);
    p.reference = pad_resize(read_image(existing(root / "cloth" / e.cloth)), opts.size);
    p.mask = pad_resize(read_mask(existing(root / "agnostic-mask" / (stem + "_mask.png")),
                                  MaskPolarity::kEditIsWhite),
                        opts.size);
    p.pose.image =
        pad_resize(read_image(existing(root / "openpose-img" / (stem + "_rendered.png"))), opts.size);
    if (p.cloth_name == p.name) p.target = p.source;
    pairs[i] = std::move(p);
  });
  return pairs;
}

void write_vton_layout(const fs::path& root, const std::vector<SamplePair>& pairs) {
  for (const char* sub : {"image", "cloth", "agnostic-mask", "openpose-img"}) {
    std::error_code ec;
    fs::create_directories(root / sub, ec);
    require(!ec, ErrorKind::kIo, "cannot create " + (root / sub).string() + ": " + ec.message());
  }
  parallel_for(static_cast<int>(pairs.size()), default_threads(), [&](int i) {
    const SamplePair& p = pairs[i];
    write_png(root / "image" / (p.name + ".png"), p.source);
    write_png(root / "cloth" / (p.cloth_name + ".png"), p.reference);
    write_mask_png(root / "agnostic-mask" / (p.name + "_mask.png"), p.mask, MaskPolarity::kEditIsWhite);
    write_png(root / "openpose-img" / (p.name + "_rendered.png"), p.pose.image);
  });
  std::ofstream out(root / "pairs.txt", std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (root / "pairs.txt").string());
  for (const auto& p : pairs) out << p.name << ".png " << p.cloth_name << ".png\n";
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + (root / "pairs.txt").string());
}

}  // namespace dvton
