#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvton/model_config.hpp"
#include "dvton/tensor.hpp"
#include "dvton/tokenizer.hpp"

namespace dvton {

template <typename T>
struct Linear {
  Mat<T> weight;  // in x out
  Mat<T> bias;    // 1 x out

  Linear() = default;
  Linear(int in, int out) : weight(Mat<T>::Zero(in, out)), bias(Mat<T>::Zero(1, out)) {}
};

template <typename T>
struct BlockParams {
  Linear<T> modulation;  // d -> 6d: shift/scale/gate for attention and MLP
  Linear<T> qkv;
  Linear<T> attn_out;
  Linear<T> mlp_in;
  Linear<T> mlp_out;
};

// All learned arrays of the denoiser. Visiting order is fixed and defines the
// checkpoint layout and the optimizer state layout.
template <typename T>
struct ModelParams {
  Linear<T> patch_embed;    // p^2 * main_channels -> d
  Linear<T> control_embed;  // p^2 * (c + 1) -> d, control_net only
  Mat<T> segment_embed;     // kNumSegments x d
  Linear<T> time_in;        // time_freq_dim -> d
  Linear<T> time_out;       // d -> d
  std::vector<BlockParams<T>> blocks;
  std::vector<BlockParams<T>> control_blocks;
  std::vector<Linear<T>> fusion;  // zero-initialized, one per control block
  Linear<T> final_modulation;     // d -> 2d
  Linear<T> output;               // d -> p^2 * c

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  // Same shapes, all zeros.
  ModelParams zeros_like() const;
  template <typename U>
  ModelParams<U> cast() const;
  std::size_t count() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f);
};

// Initialization following the adaLN-zero recipe: modulations, the output
// projection and the control fusions start at exactly zero; control blocks
// start as copies of the first control_depth main blocks.
ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Throws when any array has the wrong shape for cfg.
template <typename T>
void check_param_shapes(const ModelParams<T>& params, const ModelConfig& cfg);

// Fixed 2-D sinusoidal embedding: first half of the width encodes the row,
// second half the column.
template <typename T>
Mat<T> position_embedding(std::span<const Position> positions, int width);

// Sinusoidal embedding of t in [0, 1] (scaled by 1000) with dim frequencies.
template <typename T>
Mat<T> time_frequency_embedding(double t, int dim);

template <typename T>
struct BlockTape {
  Mat<T> input, norm1, h1, qkv, attn, attn_proj, mid, norm2, h2, pre_act, act, mlp_proj;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1, rstd2;
  std::vector<Mat<T>> probs;
  Mat<T> mod;  // 1 x 6d
};

// Intermediates of one forward pass, consumed by backbone_backward.
template <typename T>
struct ForwardTape {
  const TokenSequence* main = nullptr;
  const TokenSequence* control = nullptr;
  double t = 0.0;
  Mat<T> time_freq, time_pre, time_act, cond, cond_act;
  std::vector<BlockTape<T>> blocks;
  std::vector<BlockTape<T>> control_blocks;
  std::vector<Mat<T>> control_outputs;
  Mat<T> final_input, final_norm, final_h, final_mod;
  Eigen::Matrix<T, Eigen::Dynamic, 1> final_rstd;
};

// Runs the denoiser on raw patch tokens (width p^2 * channels); the learned
// patch embedding is part of the params. Returns one row of p^2 * c output
// values per input token. `control` is required iff cfg.mode is control_net.
// Throws ErrorKind::kNumeric on non-finite output.
template <typename T>
Mat<T> backbone_forward(const TokenSequence& main, const TokenSequence* control, double t,
                        const ModelParams<T>& params, const ModelConfig& cfg,
                        ForwardTape<T>* tape = nullptr);

// Accumulates parameter gradients of <d_output, output> into grads.
template <typename T>
void backbone_backward(const ForwardTape<T>& tape, const Mat<T>& d_output,
                       const ModelParams<T>& params, const ModelConfig& cfg,
                       ModelParams<T>& grads);

// Scalar objective of the backbone output: returns the loss and writes
// dLoss/dOutput.
template <typename T>
using OutputObjective = std::function<T(const Mat<T>& output, Mat<T>& d_output)>;

// Gradient of objective(backbone(...)) w.r.t. every parameter array, added to
// grads. Returns the loss. Throws on a non-finite loss.
template <typename T>
T param_gradients(const TokenSequence& main, const TokenSequence* control, double t,
                  const ModelParams<T>& params, const ModelConfig& cfg,
                  const OutputObjective<T>& objective, ModelParams<T>& grads);

// Float inference entry points. Output tokens keep positions and segments.
TokenSequence forward(const TokenSequence& seq, double t, const ModelParams<float>& params,
                      const ModelConfig& cfg);
TokenSequence forward_with_control(const TokenSequence& main, const TokenSequence& control,
                                   double t, const ModelParams<float>& params,
                                   const ModelConfig& cfg);

// --- template members ------------------------------------------------------

template <typename T>
template <typename Self, typename F>
void ModelParams<T>::visit_impl(Self& self, F& f) {
  auto linear = [&](const std::string& name, auto& lin) {
    f(name + ".weight", lin.weight);
    f(name + ".bias", lin.bias);
  };
  auto block = [&](const std::string& name, auto& b) {
    linear(name + ".modulation", b.modulation);
    linear(name + ".qkv", b.qkv);
    linear(name + ".attn_out", b.attn_out);
    linear(name + ".mlp_in", b.mlp_in);
    linear(name + ".mlp_out", b.mlp_out);
  };
  linear("patch_embed", self.patch_embed);
  linear("control_embed", self.control_embed);
  f(std::string("segment_embed"), self.segment_embed);
  linear("time_in", self.time_in);
  linear("time_out", self.time_out);
  for (std::size_t i = 0; i < self.blocks.size(); ++i) {
    block("blocks." + std::to_string(i), self.blocks[i]);
  }
  for (std::size_t i = 0; i < self.control_blocks.size(); ++i) {
    block("control_blocks." + std::to_string(i), self.control_blocks[i]);
  }
  for (std::size_t i = 0; i < self.fusion.size(); ++i) {
    linear("fusion." + std::to_string(i), self.fusion[i]);
  }
  linear("final_modulation", self.final_modulation);
  linear("output", self.output);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> out = *this;
  out.visit([](const std::string&, Mat<T>& m) { m.setZero(); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  auto lin = [](const Linear<T>& l) {
    Linear<U> o;
    o.weight = l.weight.template cast<U>();
    o.bias = l.bias.template cast<U>();
    return o;
  };
  auto blk = [&](const BlockParams<T>& b) {
    return BlockParams<U>{lin(b.modulation), lin(b.qkv), lin(b.attn_out), lin(b.mlp_in),
                          lin(b.mlp_out)};
  };
  ModelParams<U> out;
  out.patch_embed = lin(patch_embed);
  out.control_embed = lin(control_embed);
  out.segment_embed = segment_embed.template cast<U>();
  out.time_in = lin(time_in);
  out.time_out = lin(time_out);
  for (const auto& b : blocks) out.blocks.push_back(blk(b));
  for (const auto& b : control_blocks) out.control_blocks.push_back(blk(b));
  for (const auto& l : fusion) out.fusion.push_back(lin(l));
  out.final_modulation = lin(final_modulation);
  out.output = lin(output);
  return out;
}

}  // namespace dvton
