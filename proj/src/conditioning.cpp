#include "dvton/conditioning.hpp"

#include <array>
#include <vector>

#include "dvton/error.hpp"

namespace dvton {

namespace {

void require_grid(const LatentGrid& g, const LatentGrid& ref, const char* what) {
  require(g.h == ref.h && g.w == ref.w, ErrorKind::kShapeMismatch,
          std::string(what) + " latent " + std::to_string(g.h) + "x" + std::to_string(g.w) +
              " differs from x_t " + std::to_string(ref.h) + "x" + std::to_string(ref.w));
  require(g.c == ref.c, ErrorKind::kShapeMismatch,
          std::string(what) + " latent channel count differs from x_t");
}

void check_bundle(const ConditionBundle& b, const ModelConfig& cfg) {
  require(b.noisy.c == cfg.latent_channels, ErrorKind::kShapeMismatch,
          "x_t has " + std::to_string(b.noisy.c) + " channels, model expects " +
              std::to_string(cfg.latent_channels));
  require_grid(b.reference, b.noisy, "reference");
  require_grid(b.masked_source, b.noisy, "masked-source");
}

const Mask& require_mask(const ConditionBundle& b) {
  require(b.mask.has_value(), ErrorKind::kInvalidArgument,
          "channel layouts need the latent mask in the bundle");
  require(b.mask->height == b.noisy.h && b.mask->width == b.noisy.w, ErrorKind::kShapeMismatch,
          "latent mask extent differs from x_t");
  return *b.mask;
}

// Shifts positions of the i-th concatenated segment in offset mode.
void offset_positions(TokenSequence& seq, int slot, int grid_cols, const ModelConfig& cfg) {
  if (cfg.positions != PositionMode::kOffset) return;
  for (auto& p : seq.positions) p.col += slot * grid_cols;
}

// Writes `src` channels into `dst` at channel offset, column offset.
void place(LatentGrid& dst, const LatentGrid& src, int col_offset, int ch_offset) {
  for (int r = 0; r < src.h; ++r) {
    for (int c = 0; c < src.w; ++c) {
      for (int ch = 0; ch < src.c; ++ch) dst.at(r, c + col_offset, ch + ch_offset) = src.at(r, c, ch);
    }
  }
}

// Side-by-side layout: x_c and m_c always, z_c when with_noise is set.
LatentGrid side_by_side(const ConditionBundle& b, const ModelConfig& cfg, RandomStream& padding,
                        bool with_noise) {
  check_bundle(b, cfg);
  const Mask& mask = require_mask(b);
  const int h = b.noisy.h;
  const int w = b.noisy.w;
  const int c = b.noisy.c;
  LatentGrid grid(h, 2 * w, with_noise ? 2 * c + 1 : c + 1);
  place(grid, b.masked_source, 0, 0);
  place(grid, b.reference, w, 0);
  const float pad_mask = cfg.mask_padding == MaskPadding::kKeep ? 1.0f : 0.0f;
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      grid.at(r, col, c) = static_cast<float>(mask.at(r, col));
      grid.at(r, col + w, c) = pad_mask;
    }
  }
  if (with_noise) {
    place(grid, b.noisy, 0, c + 1);
    if (cfg.noise_padding == NoisePadding::kGaussian) {
      for (int r = 0; r < h; ++r) {
        for (int col = w; col < 2 * w; ++col) {
          for (int ch = 0; ch < c; ++ch) {
            grid.at(r, col, c + 1 + ch) = static_cast<float>(padding.normal());
          }
        }
      }
    }
  }
  return grid;
}

LatentGrid noise_side(const ConditionBundle& b, const ModelConfig& cfg, RandomStream& padding) {
  const int w = b.noisy.w;
  LatentGrid grid(b.noisy.h, 2 * w, b.noisy.c);
  place(grid, b.noisy, 0, 0);
  if (cfg.noise_padding == NoisePadding::kGaussian) {
    for (int r = 0; r < grid.h; ++r) {
      for (int col = w; col < 2 * w; ++col) {
        for (int ch = 0; ch < grid.c; ++ch) grid.at(r, col, ch) = static_cast<float>(padding.normal());
      }
    }
  }
  return grid;
}

// Output row / value slot for every element of the velocity grid.
struct VelocityMap {
  std::vector<int> rows;     // output row per velocity element
  std::vector<int> columns;  // output column per velocity element
};

VelocityMap velocity_map(const AssembledInput& in, const ModelConfig& cfg) {
  const int p = cfg.patch;
  const int c = cfg.latent_channels;
  VelocityMap map;
  const std::size_t n = static_cast<std::size_t>(in.latent_h) * in.latent_w * c;
  map.rows.assign(n, -1);
  map.columns.assign(n, -1);
  const auto& seq = in.main;
  for (int i = 0; i < seq.size(); ++i) {
    if (seq.segments[i] != Segment::kNoise) continue;
    const auto [pr, pc] = seq.positions[i];
    if (pc * p >= in.latent_w) continue;  // right (padding) half
    int k = 0;
    for (int dr = 0; dr < p; ++dr) {
      for (int dc = 0; dc < p; ++dc) {
        for (int ch = 0; ch < c; ++ch, ++k) {
          const int r = pr * p + dr;
          const int col = pc * p + dc;
          const std::size_t idx = (static_cast<std::size_t>(r) * in.latent_w + col) * c + ch;
          map.rows[idx] = i;
          map.columns[idx] = k;
        }
      }
    }
  }
  for (int r : map.rows) {
    require(r >= 0, ErrorKind::kInvalidArgument,
            "noise tokens do not cover the x_t grid exactly");
  }
  return map;
}

}  // namespace

LatentGrid mask_to_latent(const Mask& mask) {
  LatentGrid g(mask.height, mask.width, 1);
  for (std::size_t i = 0; i < mask.data.size(); ++i) g.data[i] = static_cast<float>(mask.data[i]);
  return g;
}

TokenSequence assemble_token_concat(const ConditionBundle& b, const ModelConfig& cfg) {
  check_bundle(b, cfg);
  const int p = cfg.patch;
  const int grid_cols = b.noisy.w / p;
  std::vector<TokenSequence> parts;
  parts.push_back(extract_patches(b.noisy, Segment::kNoise, p));
  parts.push_back(extract_patches(b.reference, Segment::kReference, p));
  parts.push_back(extract_patches(b.masked_source, Segment::kMaskedSource, p));
  if (cfg.pose == PoseStrategy::kConcat) {
    require(b.pose.has_value(), ErrorKind::kInvalidArgument,
            "pose=concat needs the pose latent in the bundle");
    require_grid(*b.pose, b.noisy, "pose");
    parts.push_back(extract_patches(*b.pose, Segment::kPose, p));
  }
  for (std::size_t slot = 1; slot < parts.size(); ++slot) {
    offset_positions(parts[slot], static_cast<int>(slot), grid_cols, cfg);
  }
  return concat_sequences(parts);
}

LatentGrid channel_concat_grid(const ConditionBundle& b, const ModelConfig& cfg,
                               RandomStream& padding) {
  return side_by_side(b, cfg, padding, /*with_noise=*/true);
}

TokenSequence assemble_channel_concat(const ConditionBundle& b, const ModelConfig& cfg,
                                      RandomStream& padding) {
  return extract_patches(channel_concat_grid(b, cfg, padding), Segment::kNoise, cfg.patch);
}

std::pair<TokenSequence, TokenSequence> assemble_control_net(const ConditionBundle& b,
                                                             const ModelConfig& cfg,
                                                             RandomStream& padding) {
  const LatentGrid ctrl = side_by_side(b, cfg, padding, /*with_noise=*/false);
  const LatentGrid main = noise_side(b, cfg, padding);
  return {extract_patches(main, Segment::kNoise, cfg.patch),
          extract_patches(ctrl, Segment::kMaskedSource, cfg.patch)};
}

LatentGrid extract_channel_concat(const LatentGrid& out, int generation_width) {
  require(out.w % 2 == 0, ErrorKind::kInvalidArgument,
          "extract_channel_concat: odd output width " + std::to_string(out.w));
  require(out.w == 2 * generation_width, ErrorKind::kInvalidArgument,
          "extract_channel_concat: output width " + std::to_string(out.w) +
              " is not twice the generation width " + std::to_string(generation_width) +
              " (already extracted?)");
  LatentGrid half(out.h, generation_width, out.c);
  for (int r = 0; r < out.h; ++r) {
    for (int c = 0; c < generation_width; ++c) {
      for (int ch = 0; ch < out.c; ++ch) half.at(r, c, ch) = out.at(r, c, ch);
    }
  }
  return half;
}

AssembledInput assemble(const ConditionBundle& b, const ModelConfig& cfg, RandomStream& padding) {
  AssembledInput in;
  in.latent_h = b.noisy.h;
  in.latent_w = b.noisy.w;
  switch (cfg.mode) {
    case ConditioningMode::kTokenConcat:
      in.main = assemble_token_concat(b, cfg);
      break;
    case ConditioningMode::kChannelConcat:
      in.main = assemble_channel_concat(b, cfg, padding);
      break;
    case ConditioningMode::kControlNet: {
      auto [main, ctrl] = assemble_control_net(b, cfg, padding);
      in.main = std::move(main);
      in.control = std::move(ctrl);
      break;
    }
  }
  return in;
}

LatentGrid velocity_from_output(const MatF& output, const AssembledInput& in,
                                const ModelConfig& cfg) {
  require(output.rows() == in.main.size(), ErrorKind::kShapeMismatch,
          "backbone output row count differs from the input sequence");
  TokenSequence out;
  out.tokens = output;
  out.positions = in.main.positions;
  out.segments = in.main.segments;
  const TokenSequence noise = strip_to_segment(out, Segment::kNoise);
  const LatentGrid grid =
      scatter_patches(noise.tokens, noise.positions, cfg.patch, cfg.latent_channels);
  if (cfg.mode == ConditioningMode::kTokenConcat) return grid;
  return extract_channel_concat(grid, in.latent_w);
}

LatentGrid predict_denoised(const ConditionBundle& b, double t, const ModelParams<float>& params,
                            const ModelConfig& cfg, RandomStream& padding) {
  const AssembledInput in = assemble(b, cfg, padding);
  const MatF out = backbone_forward<float>(in.main, in.control ? &*in.control : nullptr, t,
                                           params, cfg);
  return velocity_from_output(out, in, cfg);
}

template <typename T>
T velocity_matching_loss(const AssembledInput& in, const LatentGrid& target, double t,
                         const ModelParams<T>& params, const ModelConfig& cfg,
                         ModelParams<T>* grads) {
  require(target.h == in.latent_h && target.w == in.latent_w && target.c == cfg.latent_channels,
          ErrorKind::kShapeMismatch, "velocity target shape differs from x_t");
  const VelocityMap map = velocity_map(in, cfg);
  const T inv_n = T(1) / static_cast<T>(target.data.size());
  auto objective = [&](const Mat<T>& out, Mat<T>& d_out) {
    T loss = 0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
      const T diff = out(map.rows[i], map.columns[i]) - static_cast<T>(target.data[i]);
      loss += diff * diff;
      d_out(map.rows[i], map.columns[i]) = T(2) * diff * inv_n;
    }
    return loss * inv_n;
  };
  const TokenSequence* ctrl = in.control ? &*in.control : nullptr;
  if (grads) return param_gradients<T>(in.main, ctrl, t, params, cfg, objective, *grads);
  const Mat<T> out = backbone_forward<T>(in.main, ctrl, t, params, cfg);
  Mat<T> scratch = Mat<T>::Zero(out.rows(), out.cols());
  return objective(out, scratch);
}

template float velocity_matching_loss<float>(const AssembledInput&, const LatentGrid&, double,
                                             const ModelParams<float>&, const ModelConfig&,
                                             ModelParams<float>*);
template double velocity_matching_loss<double>(const AssembledInput&, const LatentGrid&, double,
                                               const ModelParams<double>&, const ModelConfig&,
                                               ModelParams<double>*);

}  // namespace dvton
