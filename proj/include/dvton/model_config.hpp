#pragma once

#include <cstdint>
#include <string>

namespace dvton {

// How the image conditions enter the transformer.
enum class ConditioningMode {
  kTokenConcat,    // P(x_t) . P(x_r) . P(x_e) along the sequence
  kChannelConcat,  // side-by-side spatial layout, stacked on channels
  kControlNet,     // conditions through a copied branch fused by summation
};

enum class PoseStrategy {
  kNone,
  kConcat,  // pose latent tokens appended to the sequence
  kStitch,  // pose painted into the edit region of the masked image (pixels)
};

// 2-D positions of condition tokens.
enum class PositionMode {
  kShared,  // every segment reuses the patch-grid positions of the noise tokens
  kOffset,  // segment k is shifted right by k grid widths
};

// Content of the mask-side padding image in the channel layouts.
enum class MaskPadding { kKeep, kEdit };
// Content of the noise-side padding image in the channel layouts.
enum class NoisePadding { kGaussian, kZeros };

std::string to_string(ConditioningMode m);
std::string to_string(PoseStrategy p);
std::string to_string(PositionMode p);
std::string to_string(MaskPadding p);
std::string to_string(NoisePadding p);
ConditioningMode conditioning_mode_from_string(const std::string& s);
PoseStrategy pose_strategy_from_string(const std::string& s);
PositionMode position_mode_from_string(const std::string& s);
MaskPadding mask_padding_from_string(const std::string& s);
NoisePadding noise_padding_from_string(const std::string& s);

struct ModelConfig {
  int depth = 6;
  int width = 128;
  int heads = 4;
  int patch = 2;
  double mlp_ratio = 4.0;
  ConditioningMode mode = ConditioningMode::kTokenConcat;
  PoseStrategy pose = PoseStrategy::kNone;
  // Blocks copied into the control branch (control_net only).
  int control_depth = 3;
  int latent_channels = 12;
  int time_freq_dim = 256;
  PositionMode positions = PositionMode::kShared;
  MaskPadding mask_padding = MaskPadding::kKeep;
  NoisePadding noise_padding = NoisePadding::kGaussian;

  int head_dim() const { return width / heads; }
  int mlp_width() const { return static_cast<int>(width * mlp_ratio); }
  // Latent channels per token of the main sequence.
  int main_channels() const {
    return mode == ConditioningMode::kChannelConcat ? 2 * latent_channels + 1 : latent_channels;
  }
  int control_channels() const { return latent_channels + 1; }
  int effective_control_depth() const {
    return mode == ConditioningMode::kControlNet ? control_depth : 0;
  }

  void validate() const;
  // Stable one-line key=value rendering; the basis of config hashes.
  std::string canonical() const;
  bool operator==(const ModelConfig&) const = default;
};

}  // namespace dvton
