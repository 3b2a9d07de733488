#include "dvton/model_config.hpp"

#include <sstream>

#include "dvton/error.hpp"

namespace dvton {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<const char*, E> (&table)[N], const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  fail(ErrorKind::kInvalidArgument, std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, std::size_t N>
std::string name_of(E v, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (v == value) return name;
  }
  return "unknown";
}

constexpr std::pair<const char*, ConditioningMode> kModes[] = {
    {"token_concat", ConditioningMode::kTokenConcat},
    {"channel_concat", ConditioningMode::kChannelConcat},
    {"control_net", ConditioningMode::kControlNet},
};
constexpr std::pair<const char*, PoseStrategy> kPoses[] = {
    {"none", PoseStrategy::kNone},
    {"concat", PoseStrategy::kConcat},
    {"stitch", PoseStrategy::kStitch},
};
constexpr std::pair<const char*, PositionMode> kPositions[] = {
    {"shared", PositionMode::kShared},
    {"offset", PositionMode::kOffset},
};
constexpr std::pair<const char*, MaskPadding> kMaskPads[] = {
    {"keep", MaskPadding::kKeep},
    {"edit", MaskPadding::kEdit},
};
constexpr std::pair<const char*, NoisePadding> kNoisePads[] = {
    {"gaussian", NoisePadding::kGaussian},
    {"zeros", NoisePadding::kZeros},
};

}  // namespace

std::string to_string(ConditioningMode m) { return name_of(m, kModes); }
std::string to_string(PoseStrategy p) { return name_of(p, kPoses); }
std::string to_string(PositionMode p) { return name_of(p, kPositions); }
std::string to_string(MaskPadding p) { return name_of(p, kMaskPads); }
std::string to_string(NoisePadding p) { return name_of(p, kNoisePads); }

ConditioningMode conditioning_mode_from_string(const std::string& s) {
  return parse_enum(s, kModes, "model configuration");
}
PoseStrategy pose_strategy_from_string(const std::string& s) {
  return parse_enum(s, kPoses, "pose strategy");
}
PositionMode position_mode_from_string(const std::string& s) {
  return parse_enum(s, kPositions, "position mode");
}
MaskPadding mask_padding_from_string(const std::string& s) {
  return parse_enum(s, kMaskPads, "mask padding");
}
NoisePadding noise_padding_from_string(const std::string& s) {
  return parse_enum(s, kNoisePads, "noise padding");
}

void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    require(ok, ErrorKind::kInvalidArgument, "model config: " + msg);
  };
  check(depth >= 1, "depth must be >= 1");
  check(width >= 4 && width % 4 == 0, "width must be a positive multiple of 4");
  check(heads >= 1 && width % heads == 0, "width must be divisible by heads");
  check(patch >= 1, "patch must be >= 1");
  check(mlp_ratio > 0.0 && mlp_width() >= 1, "mlp_ratio must be positive");
  check(latent_channels >= 1, "latent_channels must be >= 1");
  check(time_freq_dim >= 2 && time_freq_dim % 2 == 0, "time_freq_dim must be even");
  check(control_depth >= 0 && control_depth <= depth, "control_depth must lie in [0, depth]");
  check(mode == ConditioningMode::kTokenConcat || pose != PoseStrategy::kConcat,
        "pose=concat applies to token_concat only");
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "config=" << to_string(mode) << ";pose=" << to_string(pose) << ";depth=" << depth
     << ";width=" << width << ";heads=" << heads << ";patch=" << patch
     << ";mlp_ratio=" << mlp_ratio << ";control_depth=" << control_depth
     << ";latent_channels=" << latent_channels << ";time_freq_dim=" << time_freq_dim
     << ";positions=" << to_string(positions) << ";mask_padding=" << to_string(mask_padding)
     << ";noise_padding=" << to_string(noise_padding);
  return os.str();
}

}  // namespace dvton
