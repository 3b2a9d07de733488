#pragma once

#include <optional>
#include <utility>

#include "dvton/backbone.hpp"
#include "dvton/image.hpp"
#include "dvton/latent.hpp"
#include "dvton/model_config.hpp"
#include "dvton/rng.hpp"
#include "dvton/tokenizer.hpp"

namespace dvton {

// Latent inputs of one denoising call, all on the same (h, w) grid.
struct ConditionBundle {
  LatentGrid noisy;          // x_t
  LatentGrid reference;      // x_r
  LatentGrid masked_source;  // x_e (already pose-stitched for pose=stitch)
  std::optional<Mask> mask;  // x_m at latent resolution; channel layouts only
  std::optional<LatentGrid> pose;  // x_p; pose=concat only
};

// Backbone inputs for one configuration.
struct AssembledInput {
  TokenSequence main;
  std::optional<TokenSequence> control;
  int latent_h = 0;
  int latent_w = 0;  // width of x_t; the side-by-side layouts are twice as wide
};

// Raw patch tokens P(x_t) . P(x_r) . P(x_e) [. P(x_p)]. The mask is unused.
TokenSequence assemble_token_concat(const ConditionBundle& b, const ModelConfig& cfg);

// (h, 2w, 2c + 1) grid x_c (c) | m_c (1) | z_c (c), with x_c = x_e (+) x_r,
// m_c = x_m (+) O and z_c = x_t (+) P spatially concatenated along the width.
LatentGrid channel_concat_grid(const ConditionBundle& b, const ModelConfig& cfg,
                               RandomStream& padding);
// Patch tokens of channel_concat_grid, one noise segment.
TokenSequence assemble_channel_concat(const ConditionBundle& b, const ModelConfig& cfg,
                                      RandomStream& padding);

// Main branch z_c (noise segment) and control branch x_c | m_c
// (masked_source segment), both over the (h, 2w) layout.
std::pair<TokenSequence, TokenSequence> assemble_control_net(const ConditionBundle& b,
                                                             const ModelConfig& cfg,
                                                             RandomStream& padding);

// Left (generation) half of a side-by-side output. `generation_width` is the
// width of x_t; anything but an output exactly twice as wide is rejected, so a
// second extraction fails.
LatentGrid extract_channel_concat(const LatentGrid& out, int generation_width);

AssembledInput assemble(const ConditionBundle& b, const ModelConfig& cfg, RandomStream& padding);

// Velocity grid aligned with x_t from raw backbone output rows.
LatentGrid velocity_from_output(const MatF& output, const AssembledInput& in,
                                const ModelConfig& cfg);

// Denoiser prediction for x_t: assemble, run the backbone, keep the noise
// tokens (or the left half), unpatchify.
LatentGrid predict_denoised(const ConditionBundle& b, double t, const ModelParams<float>& params,
                            const ModelConfig& cfg, RandomStream& padding);

// Mean squared error between the predicted velocity and `target`. When grads
// is non-null the parameter gradients are added to it.
template <typename T>
T velocity_matching_loss(const AssembledInput& in, const LatentGrid& target, double t,
                         const ModelParams<T>& params, const ModelConfig& cfg,
                         ModelParams<T>* grads);

// Single-channel latent grid holding the keep-mask as 0/1 values.
LatentGrid mask_to_latent(const Mask& mask);

}  // namespace dvton
