#include "dvton/pipeline.hpp"

#include "dvton/error.hpp"
#include "dvton/imaging.hpp"

namespace dvton {

Image masked_input(const SamplePair& pair, const ModelConfig& cfg) {
  if (cfg.pose == PoseStrategy::kStitch) return pose_stitch(pair.source, pair.mask, pair.pose);
  return apply_mask(pair.source, pair.mask);
}

EncodedConditions encode_conditions(const SamplePair& pair, const ModelConfig& cfg, const Codec& codec) {
  require(codec.config().channels == cfg.latent_channels, ErrorKind::kShapeMismatch,
          "codec produces " + std::to_string(codec.config().channels) + " channels, model expects " +
              std::to_string(cfg.latent_channels));
  require(pair.reference.height == pair.source.height && pair.reference.width == pair.source.width,
          ErrorKind::kShapeMismatch, "reference extent differs from source in pair '" + pair.name + "'");
  EncodedConditions enc;
  enc.reference = codec.encode(pair.reference);
  enc.masked_source = codec.encode(masked_input(pair, cfg));
  enc.latent_mask = downsample_mask(pair.mask, codec.config().factor);
  if (cfg.pose == PoseStrategy::kConcat) enc.pose = codec.encode(pair.pose.image);
  return enc;
}

ConditionBundle make_bundle(const EncodedConditions& enc, LatentGrid noisy) {
  ConditionBundle b;
  b.noisy = std::move(noisy);
  b.reference = enc.reference;
  b.masked_source = enc.masked_source;
  b.mask = enc.latent_mask;
  b.pose = enc.pose;
  return b;
}

const Image& training_image(const SamplePair& pair) { return pair.target ? *pair.target : pair.source; }

std::uint64_t item_seed(std::uint64_t base, int index) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

LatentGrid synthesize_latent(const EncodedConditions& enc, int h, int w,
                             const ModelParams<float>& params, const ModelConfig& cfg,
                             const SamplerConfig& scfg) {
  RandomStream padding = RandomStream::named(scfg.seed, "sampler-padding");
  const VelocityField field = [&](const LatentGrid& x, double t) {
    return predict_denoised(make_bundle(enc, x), t, params, cfg, padding);
  };
  return sample(h, w, cfg.latent_channels, field, scfg);
}

Image synthesize(const SamplePair& pair, const ModelParams<float>& params, const ModelConfig& cfg,
                 const Codec& codec, const SamplerConfig& scfg) {
  const int f = codec.config().factor;
  require(pair.source.height % f == 0 && pair.source.width % f == 0, ErrorKind::kShapeMismatch,
          "source extent is not divisible by the codec factor");
  const EncodedConditions enc = encode_conditions(pair, cfg, codec);
  const LatentGrid z =
      synthesize_latent(enc, pair.source.height / f, pair.source.width / f, params, cfg, scfg);
  return composite_unedited(codec.decode(z), pair.source, pair.mask);
}

}  // namespace dvton
