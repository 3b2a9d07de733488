#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dvton/conditioning.hpp"
#include "dvton/error.hpp"
#include "dvton/imaging.hpp"
#include "dvton/pipeline.hpp"
#include "support.hpp"

using namespace dvton;
using dvton::test::random_latent;
using dvton::test::random_mask;

namespace {

ConditionBundle bundle(RandomStream& rng, int h, int w, int c, bool with_pose = false) {
  ConditionBundle b;
  b.noisy = random_latent(rng, h, w, c);
  b.reference = random_latent(rng, h, w, c);
  b.masked_source = random_latent(rng, h, w, c);
  b.mask = random_mask(rng, h, w);
  if (with_pose) b.pose = random_latent(rng, h, w, c);
  return b;
}

ModelConfig small(ConditioningMode mode) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.width = 32;
  cfg.heads = 2;
  cfg.mode = mode;
  cfg.control_depth = 1;
  cfg.time_freq_dim = 32;
  return cfg;
}

const ConditioningMode kModes[] = {ConditioningMode::kTokenConcat, ConditioningMode::kChannelConcat,
                                   ConditioningMode::kControlNet};

}  // namespace

TEST_CASE("token concatenation order and counts") {
  RandomStream rng(1);
  ModelConfig cfg;
  const ConditionBundle b = bundle(rng, 32, 32, 12, true);
  const TokenSequence seq = assemble_token_concat(b, cfg);
  CHECK(seq.size() == 768);
  CHECK(seq.dim() == 48);
  for (int i = 0; i < 768; ++i) {
    const Segment expect = i < 256 ? Segment::kNoise : i < 512 ? Segment::kReference : Segment::kMaskedSource;
    CHECK(seq.segments[i] == expect);
  }
  CHECK(seq.tokens.row(0) == extract_patches(b.noisy, Segment::kNoise, 2).tokens.row(0));
  CHECK(seq.tokens.row(256) == extract_patches(b.reference, Segment::kReference, 2).tokens.row(0));
  CHECK(seq.tokens.row(512 + 17) ==
        extract_patches(b.masked_source, Segment::kMaskedSource, 2).tokens.row(17));
  CHECK(seq.positions[5] == seq.positions[256 + 5]);

  cfg.pose = PoseStrategy::kConcat;
  const TokenSequence with_pose = assemble_token_concat(b, cfg);
  CHECK(with_pose.size() == 1024);
  CHECK(with_pose.segments[1023] == Segment::kPose);

  cfg.positions = PositionMode::kOffset;
  const TokenSequence offset = assemble_token_concat(b, cfg);
  CHECK(offset.positions[256].col == offset.positions[0].col + 16);
  CHECK(offset.positions[512].col == offset.positions[0].col + 32);

  ConditionBundle missing = b;
  missing.pose.reset();
  CHECK_THROWS_AS(assemble_token_concat(missing, cfg), Error);
}

TEST_CASE("channel concatenation grid layout") {
  RandomStream rng(2);
  const ModelConfig cfg = small(ConditioningMode::kChannelConcat);
  const ConditionBundle b = bundle(rng, 32, 32, 12);
  RandomStream pad(3);
  const LatentGrid g = channel_concat_grid(b, cfg, pad);
  CHECK(g.h == 32);
  CHECK(g.w == 64);
  CHECK(g.c == 25);
  bool ok = true;
  bool right_noise_nonzero = false;
  for (int r = 0; r < 32; ++r) {
    for (int col = 0; col < 32; ++col) {
      for (int ch = 0; ch < 12; ++ch) {
        ok &= g.at(r, col, ch) == b.masked_source.at(r, col, ch);
        ok &= g.at(r, col + 32, ch) == b.reference.at(r, col, ch);
        ok &= g.at(r, col, 13 + ch) == b.noisy.at(r, col, ch);
        right_noise_nonzero |= g.at(r, col + 32, 13 + ch) != 0.0f;
      }
      ok &= g.at(r, col, 12) == static_cast<float>(b.mask->at(r, col));
      ok &= g.at(r, col + 32, 12) == 1.0f;
    }
  }
  CHECK(ok);
  CHECK(right_noise_nonzero);

  const TokenSequence seq = assemble_channel_concat(b, cfg, pad);
  CHECK(seq.size() == 512);
  CHECK(seq.dim() == 100);

  ModelConfig zeros = cfg;
  zeros.noise_padding = NoisePadding::kZeros;
  zeros.mask_padding = MaskPadding::kEdit;
  const LatentGrid z = channel_concat_grid(b, zeros, pad);
  CHECK(z.at(4, 40, 20) == 0.0f);
  CHECK(z.at(4, 40, 12) == 0.0f);

  ConditionBundle no_mask = b;
  no_mask.mask.reset();
  CHECK_THROWS_AS(channel_concat_grid(no_mask, cfg, pad), Error);
}

TEST_CASE("control branch and main branch grids") {
  RandomStream rng(4);
  const ModelConfig cfg = small(ConditioningMode::kControlNet);
  const ConditionBundle b = bundle(rng, 32, 32, 12);
  RandomStream pad(5);
  const auto [main, ctrl] = assemble_control_net(b, cfg, pad);
  CHECK(main.size() == 512);
  CHECK(ctrl.size() == 512);
  CHECK(main.dim() == 4 * 12);
  CHECK(ctrl.dim() == 4 * 13);
  CHECK(main.segments[0] == Segment::kNoise);
  CHECK(ctrl.segments[0] == Segment::kMaskedSource);
  // Token 0 of the control branch: first patch of x_e with the mask channel.
  CHECK(ctrl.tokens(0, 0) == b.masked_source.at(0, 0, 0));
  CHECK(ctrl.tokens(0, 12) == static_cast<float>(b.mask->at(0, 0)));
  CHECK(main.tokens(0, 0) == b.noisy.at(0, 0, 0));
}

TEST_CASE("extracting the generation half") {
  RandomStream rng(6);
  const LatentGrid out = random_latent(rng, 8, 16, 12);
  const LatentGrid a = extract_channel_concat(out, 8);
  CHECK(a.w == 8);
  CHECK(a.at(3, 7, 11) == out.at(3, 7, 11));
  // The right half must be discarded: changing it leaves the result intact.
  LatentGrid changed = out;
  changed.at(3, 12, 0) += 5.0f;
  CHECK(extract_channel_concat(changed, 8) == a);
  CHECK_THROWS_AS(extract_channel_concat(a, 8), Error);
  CHECK_THROWS_AS(extract_channel_concat(random_latent(rng, 8, 15, 12), 8), Error);
}

TEST_CASE("every configuration yields a velocity on the x_t grid") {
  RandomStream rng(7);
  for (ConditioningMode mode : kModes) {
    for (PoseStrategy pose : {PoseStrategy::kNone, PoseStrategy::kConcat, PoseStrategy::kStitch}) {
      if (pose == PoseStrategy::kConcat && mode != ConditioningMode::kTokenConcat) continue;
      ModelConfig cfg = small(mode);
      cfg.pose = pose;
      const ModelParams<float> params = init_params(cfg, 1);
      const ConditionBundle b = bundle(rng, 8, 8, 12, pose == PoseStrategy::kConcat);
      RandomStream pad(8);
      const LatentGrid v = predict_denoised(b, 0.5, params, cfg, pad);
      CHECK(v.h == 8);
      CHECK(v.w == 8);
      CHECK(v.c == 12);
      for (float x : v.data) CHECK(x == 0.0f);
    }
  }
}

TEST_CASE("token concatenation ignores the mask; channel layouts do not") {
  RandomStream rng(9);
  for (ConditioningMode mode : kModes) {
    ModelConfig cfg = small(mode);
    ModelParams<float> params = init_params(cfg, 2);
    RandomStream prng(10);
    params.visit([&](const std::string&, MatF& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<float>(0.05 * prng.normal());
    });
    ConditionBundle b = bundle(rng, 8, 8, 12);
    ConditionBundle inverted = b;
    for (auto& v : inverted.mask->data) v = 1 - v;
    RandomStream pad_a(11);
    RandomStream pad_b(11);
    const LatentGrid va = predict_denoised(b, 0.5, params, cfg, pad_a);
    const LatentGrid vb = predict_denoised(inverted, 0.5, params, cfg, pad_b);
    if (mode == ConditioningMode::kTokenConcat) {
      CHECK(va == vb);
    } else {
      CHECK_FALSE(va == vb);
    }
  }
}

TEST_CASE("velocity matching loss at initialization is the target energy") {
  RandomStream rng(12);
  for (ConditioningMode mode : kModes) {
    const ModelConfig cfg = small(mode);
    const ModelParams<float> params = init_params(cfg, 3);
    const ConditionBundle b = bundle(rng, 8, 8, 12);
    RandomStream pad(13);
    const AssembledInput in = assemble(b, cfg, pad);
    const LatentGrid target = random_latent(rng, 8, 8, 12);
    double energy = 0.0;
    for (float x : target.data) energy += double(x) * x;
    energy /= static_cast<double>(target.data.size());
    ModelParams<float> grads = params.zeros_like();
    const float loss = velocity_matching_loss<float>(in, target, 0.5, params, cfg, &grads);
    CHECK(loss == doctest::Approx(energy).epsilon(1e-5));
    // Only the zero-initialized output layer sees a gradient at init.
    CHECK(grads.output.weight.cwiseAbs().maxCoeff() > 0.0f);
    CHECK(velocity_matching_loss<double>(in, target, 0.5, params.cast<double>(), cfg, nullptr) ==
          doctest::Approx(energy).epsilon(1e-9));
  }
}

TEST_CASE("pose stitching paints the pose into the edit region") {
  const std::vector<SamplePair> split = make_split(2, 5, SplitMode::kPaired);
  const SamplePair& pair = split[0];
  ModelConfig cfg = small(ConditioningMode::kTokenConcat);
  cfg.pose = PoseStrategy::kStitch;
  const Image stitched = masked_input(pair, cfg);
  CHECK(stitched == pose_stitch(pair.source, pair.mask, pair.pose));
  cfg.pose = PoseStrategy::kNone;
  CHECK(masked_input(pair, cfg) == apply_mask(pair.source, pair.mask));

  const Codec codec{CodecConfig{}};
  cfg.pose = PoseStrategy::kConcat;
  const EncodedConditions enc = encode_conditions(pair, cfg, codec);
  REQUIRE(enc.pose.has_value());
  CHECK(*enc.pose == codec.encode(pair.pose.image));
  CHECK(enc.latent_mask.height == 32);
  CHECK(enc.masked_source == codec.encode(apply_mask(pair.source, pair.mask)));
}
