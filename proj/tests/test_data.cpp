#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dvton/data.hpp"
#include "dvton/error.hpp"
#include "dvton/imaging.hpp"
#include "support.hpp"

using namespace dvton;
namespace fs = std::filesystem;

namespace {

bool pixel_differs(const Image& a, const Image& b, int r, int c) {
  for (int ch = 0; ch < Image::kChannels; ++ch) {
    if (a.at(r, c, ch) != b.at(r, c, ch)) return true;
  }
  return false;
}

float max_abs_diff(const Image& a, const Image& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("synthetic splits are deterministic in the seed") {
  const auto a = make_split(6, 17, SplitMode::kPaired);
  const auto b = make_split(6, 17, SplitMode::kPaired);
  const auto c = make_split(6, 18, SplitMode::kPaired);
  CHECK(split_hash(a) == split_hash(b));
  CHECK(split_hash(a) != split_hash(c));
  CHECK(a[3].source == b[3].source);
  // A prefix of a longer split is the shorter split.
  CHECK(split_hash(make_split(4, 17, SplitMode::kPaired)) ==
        split_hash(std::vector<SamplePair>(a.begin(), a.begin() + 4)));
}

TEST_CASE("mask is exactly the pixels the garment changes") {
  RandomStream rng(3);
  for (int k = 0; k < 40; ++k) {
    const SynthSpec spec = random_spec(rng, 64);
    const SamplePair pair = render(spec);
    const Image bare = render_without_garment(spec);
    int mismatches = 0;
    int edited = 0;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        const bool edit = pair.mask.at(r, c) == 0;
        edited += edit;
        // Garment pixels colored like the bare figure underneath are allowed.
        if (!edit && pixel_differs(pair.source, bare, r, c)) ++mismatches;
      }
    }
    CHECK(mismatches == 0);
    CHECK(edited > 0);
    CHECK(pair.valid());
  }
}

TEST_CASE("skeleton joints stay inside the image") {
  RandomStream rng(4);
  for (int k = 0; k < 1000; ++k) {
    const SynthSpec spec = random_spec(rng, 64);
    const Skeleton s = skeleton_of(spec);
    for (const Joint& j : {s.head, s.left_shoulder, s.right_shoulder, s.left_hip, s.right_hip}) {
      CHECK((j.x >= 0 && j.x < 64 && j.y >= 0 && j.y < 64));
    }
  }
}

TEST_CASE("paired and unpaired splits") {
  const auto paired = make_split(5, 9, SplitMode::kPaired);
  const auto unpaired = make_split(5, 9, SplitMode::kUnpaired);
  for (int i = 0; i < 5; ++i) {
    CHECK(paired[i].target.has_value());
    CHECK(*paired[i].target == paired[i].source);
    CHECK(paired[i].cloth_name == paired[i].name);
    CHECK(paired[i].reference == render_reference(paired[i].synth->source_spec.garment, 64));
    CHECK_FALSE(unpaired[i].target.has_value());
    CHECK(unpaired[i].cloth_name != unpaired[i].name);
    CHECK_FALSE(unpaired[i].synth->reference_garment == unpaired[i].synth->source_spec.garment);
  }
  CHECK(paired[0].name == "000000_00");
  CHECK(unpaired[1].cloth_name == "000001_01");
  CHECK(split_mode_from_string("unpaired") == SplitMode::kUnpaired);
  CHECK_THROWS_AS(split_mode_from_string("both"), Error);
}

TEST_CASE("try-on ground truth") {
  RandomStream rng(5);
  const SynthSpec spec = random_spec(rng, 64);
  const GarmentDescriptor other = random_garment(rng);
  const SamplePair tryon = render_tryon(spec, other);
  REQUIRE(tryon.target.has_value());
  CHECK(tryon.reference == render_reference(other, 64));
  SynthSpec dressed = spec;
  dressed.garment = other;
  CHECK(*tryon.target == render(dressed).source);
  // Own garment: the target is the source itself.
  CHECK(*render_tryon(spec, spec.garment).target == render(spec).source);
  // Outside both garment regions the target equals the source.
  const Mask other_mask = render(dressed).mask;
  bool same = true;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      if (tryon.mask.at(r, c) && other_mask.at(r, c)) same &= !pixel_differs(*tryon.target, tryon.source, r, c);
    }
  }
  CHECK(same);
}

TEST_CASE("mask augmentation") {
  const auto split = make_split(8, 11, SplitMode::kPaired);
  RandomStream rng(6);
  int relaxed = 0;
  for (const SamplePair& p : split) {
    CHECK(augment_mask(p, 0.0, rng).mask == p.mask);
    const SamplePair box = augment_mask(p, 1.0, rng);
    CHECK(box.mask == relax_mask_to_bbox(p.mask));
    CHECK(edit_region_is_rectangle(box.mask));
  }
  const SamplePair& p = split[0];
  REQUIRE_FALSE(edit_region_is_rectangle(p.mask));
  for (int i = 0; i < 4000; ++i) relaxed += augment_mask(p, 0.5, rng).mask != p.mask;
  CHECK(relaxed / 4000.0 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("layout round trip") {
  const fs::path dir = test::scratch_dir("layout");
  auto split = make_split(3, 21, SplitMode::kPaired);
  const auto unpaired = make_split(2, 22, SplitMode::kUnpaired);
  split.insert(split.end(), unpaired.begin(), unpaired.end());
  split[3].name = "000003_00";
  split[4].name = "000004_00";
  split[3].cloth_name = "000003_01";
  split[4].cloth_name = "000004_01";
  write_vton_layout(dir, split);
  const auto loaded = load_vton_layout(dir);
  REQUIRE(loaded.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(loaded[i].name == split[i].name);
    CHECK(loaded[i].mask == split[i].mask);
    CHECK(max_abs_diff(loaded[i].source, split[i].source) <= 0.5f / 255 + 1e-6f);
    CHECK(max_abs_diff(loaded[i].reference, split[i].reference) <= 0.5f / 255 + 1e-6f);
    CHECK(loaded[i].target.has_value() == (i < 3));
  }
}

TEST_CASE("layout loader errors") {
  const fs::path dir = test::scratch_dir("layout_err");
  write_vton_layout(dir, make_split(2, 23, SplitMode::kPaired));

  SUBCASE("missing pairs file") {
    fs::remove(dir / "pairs.txt");
    try {
      load_vton_layout(dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kIo);
    }
  }
  SUBCASE("malformed line") {
    std::ofstream(dir / "pairs.txt", std::ios::app) << "only_one_field\n";
    try {
      load_vton_layout(dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  SUBCASE("missing mask") {
    fs::remove(dir / "agnostic-mask" / "000001_00_mask.png");
    try {
      load_vton_layout(dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kIo);
      CHECK(std::string(e.what()).find("000001_00_mask.png") != std::string::npos);
    }
  }
  SUBCASE("all-white mask leaves nothing to keep") {
    Mask all_edit(64, 64, 0);
    write_mask_png(dir / "agnostic-mask" / "000000_00_mask.png", all_edit, MaskPolarity::kEditIsWhite);
    const auto loaded = load_vton_layout(dir);
    CHECK(loaded[0].mask.edit_count() == 64u * 64u);
  }
}

TEST_CASE("pose map draws the limbs") {
  RandomStream rng(7);
  const SynthSpec spec = random_spec(rng, 64);
  const PoseMap pose = render_pose(spec);
  const Skeleton s = skeleton_of(spec);
  int nonzero = 0;
  for (float v : pose.image.data) nonzero += v != 0.0f;
  CHECK(nonzero > 0);
  // Joints are marked.
  const int hx = static_cast<int>(s.head.x);
  const int hy = static_cast<int>(s.head.y);
  CHECK(pose.image.at(hy, hx, 0) + pose.image.at(hy, hx, 1) > 0.0f);
}
