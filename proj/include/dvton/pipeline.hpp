#pragma once

#include <optional>

#include "dvton/backbone.hpp"
#include "dvton/codec.hpp"
#include "dvton/conditioning.hpp"
#include "dvton/data.hpp"
#include "dvton/flow.hpp"
#include "dvton/model_config.hpp"

namespace dvton {

// Latents of everything a pair contributes besides x_t.
struct EncodedConditions {
  LatentGrid reference;
  LatentGrid masked_source;  // apply_mask, or pose_stitch for pose=stitch
  Mask latent_mask;
  std::optional<LatentGrid> pose;  // pose=concat only
};

// Masked image I_e fed to the encoder for this pose strategy.
Image masked_input(const SamplePair& pair, const ModelConfig& cfg);

EncodedConditions encode_conditions(const SamplePair& pair, const ModelConfig& cfg, const Codec& codec);

ConditionBundle make_bundle(const EncodedConditions& enc, LatentGrid noisy);

// Ground-truth image the velocity target is built from: target when present,
// else the source.
const Image& training_image(const SamplePair& pair);

// Sampler seed of the i-th item of a batch generation run.
std::uint64_t item_seed(std::uint64_t base, int index);

// Full generation: conditions, Euler sampling, decode, then the source is
// copied back outside the edit region.
Image synthesize(const SamplePair& pair, const ModelParams<float>& params, const ModelConfig& cfg,
                 const Codec& codec, const SamplerConfig& scfg);

// Generated latent before decoding.
LatentGrid synthesize_latent(const EncodedConditions& enc, int h, int w,
                             const ModelParams<float>& params, const ModelConfig& cfg,
                             const SamplerConfig& scfg);

}  // namespace dvton
