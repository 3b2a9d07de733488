#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvton/image.hpp"
#include "dvton/rng.hpp"

namespace dvton {

struct Color {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
  bool operator==(const Color&) const = default;
};

enum class GarmentShape { kRect, kTrapezoid };
enum class GarmentPattern { kSolid, kStripes, kDots, kGlyph };

struct GarmentDescriptor {
  GarmentShape shape = GarmentShape::kRect;
  Color base;
  GarmentPattern pattern = GarmentPattern::kSolid;
  Color pattern_color;
  bool operator==(const GarmentDescriptor&) const = default;
};

// Figure placement, in fractions of the image size unless noted.
struct FigurePose {
  double center_x = 0.5;
  double shoulder_y = 0.38;
  double hip_y = 0.72;
  double shoulder_half_width = 0.16;
  double hip_half_width = 0.12;
  double lean = 0.0;              // radians, rotation about the hip center
  double left_arm_angle = 0.2;    // radians from straight down, outward positive
  double right_arm_angle = 0.2;
  bool operator==(const FigurePose&) const = default;
};

struct BackgroundDescriptor {
  Color top;
  Color bottom;
  bool operator==(const BackgroundDescriptor&) const = default;
};

struct SynthSpec {
  int size = 64;
  FigurePose pose;
  GarmentDescriptor garment;
  BackgroundDescriptor background;
  Color skin;
  Color legs;
  std::uint64_t seed = 0;
  bool operator==(const SynthSpec&) const = default;
};

struct SynthProvenance {
  SynthSpec source_spec;
  GarmentDescriptor reference_garment;
};

struct SamplePair {
  std::string name;        // source image stem
  std::string cloth_name;  // reference image stem
  Image source;
  Image reference;
  Mask mask;
  PoseMap pose;
  std::optional<Image> target;  // paired ground truth
  std::optional<SynthProvenance> synth;

  // Extents agree and the edit region is nonempty.
  bool valid() const;
};

enum class SplitMode { kPaired, kUnpaired };
std::string to_string(SplitMode m);
SplitMode split_mode_from_string(const std::string& s);

// Skeleton joints in pixel coordinates (x, y).
struct Joint {
  double x = 0.0;
  double y = 0.0;
};
struct Skeleton {
  Joint head, left_shoulder, right_shoulder, left_hip, right_hip;
};
Skeleton skeleton_of(const SynthSpec& spec);

SynthSpec random_spec(RandomStream& rng, int size);
GarmentDescriptor random_garment(RandomStream& rng);

// Source with the spec's garment, flat reference of it, exact garment mask,
// pose map; target = source.
SamplePair render(const SynthSpec& spec);
// Same figure with no garment drawn.
Image render_without_garment(const SynthSpec& spec);
// Source of `spec` paired with the reference of `garment`; the target is the
// procedural ground truth: the same figure wearing `garment`.
SamplePair render_tryon(const SynthSpec& spec, const GarmentDescriptor& garment);
Image render_reference(const GarmentDescriptor& garment, int size);
PoseMap render_pose(const SynthSpec& spec);

// n pairs; paired: reference garment = source garment and target = source;
// unpaired: different reference garment and no target.
std::vector<SamplePair> make_split(int n, std::uint64_t seed, SplitMode mode, int size = 64);

// Hash of the split contents (names and pixels).
std::uint64_t split_hash(const std::vector<SamplePair>& pairs);

// With probability prob, replaces the mask by its minimal bounding box.
SamplePair augment_mask(const SamplePair& pair, double prob, RandomStream& rng);

// --- VITON-HD style layout ------------------------------------------------
//   root/pairs.txt            "<source> <cloth>" per line
//   root/image/<source>
//   root/cloth/<cloth>
//   root/agnostic-mask/<source stem>_mask.png   (white = edit)
//   root/openpose-img/<source stem>_rendered.png
// A pair whose cloth stem equals the source stem is paired: its source is the
// ground-truth target.

struct LayoutOptions {
  int size = 64;  // every image is pad_resized to size x size
};

std::vector<SamplePair> load_vton_layout(const std::filesystem::path& root,
                                         const LayoutOptions& opts = {});
void write_vton_layout(const std::filesystem::path& root, const std::vector<SamplePair>& pairs);

}  // namespace dvton
