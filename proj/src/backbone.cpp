#include "dvton/backbone.hpp"

#include <cmath>
#include <numbers>

#include "dvton/error.hpp"
#include "dvton/rng.hpp"

namespace dvton {

namespace {

template <typename T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-6;

template <typename T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

// tanh-approximated GELU and its derivative.
template <typename T>
Mat<T> gelu(const Mat<T>& u) {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const auto a = u.array();
  return (T(0.5) * a * (T(1) + (k * (a + T(0.044715) * a.cube())).tanh())).matrix();
}

template <typename T>
Mat<T> gelu_grad(const Mat<T>& u) {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const auto a = u.array();
  const auto th = (k * (a + T(0.044715) * a.cube())).tanh();
  return (T(0.5) * (T(1) + th) +
          T(0.5) * a * (T(1) - th.square()) * k * (T(1) + T(3 * 0.044715) * a.square()))
      .matrix();
}

template <typename T>
void linear_forward(const Mat<T>& x, const Linear<T>& lin, Mat<T>& y) {
  y.noalias() = x * lin.weight;
  y.rowwise() += lin.bias.row(0);
}

// Accumulates weight/bias grads; returns dx when wanted.
template <typename T>
void linear_backward(const Mat<T>& x, const Mat<T>& dy, const Linear<T>& lin, Linear<T>& grad,
                     Mat<T>* dx) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  if (dx) dx->noalias() = dy * lin.weight.transpose();
}

// Row-wise layer norm without affine parameters.
template <typename T>
void layer_norm(const Mat<T>& x, Mat<T>& y, Col<T>& rstd) {
  const Eigen::Index n = x.rows();
  const T inv_d = T(1) / static_cast<T>(x.cols());
  y.resize(x.rows(), x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).sum() * inv_d;
    y.row(i) = x.row(i).array() - mean;
    const T var = y.row(i).squaredNorm() * inv_d;
    rstd[i] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    y.row(i) *= rstd[i];
  }
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& y, const Col<T>& rstd) {
  const T inv_d = T(1) / static_cast<T>(y.cols());
  Mat<T> dx(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const T mean_dy = dy.row(i).sum() * inv_d;
    const T mean_dyy = dy.row(i).dot(y.row(i)) * inv_d;
    dx.row(i) = rstd[i] * (dy.row(i).array() - mean_dy - y.row(i).array() * mean_dyy);
  }
  return dx;
}

// x * (1 + scale) + shift with 1 x d scale/shift.
template <typename T, typename V>
Mat<T> modulate(const Mat<T>& x, const V& shift, const V& scale) {
  Mat<T> y = x.array().rowwise() * (scale.array() + T(1));
  y.rowwise() += shift;
  return y;
}

template <typename T>
void attention_forward(const Mat<T>& qkv, int heads, Mat<T>& out, std::vector<Mat<T>>& probs) {
  const Eigen::Index n = qkv.rows();
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  out.resize(n, d);
  probs.resize(heads);
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv.middleCols(h * dh, dh);
    const auto k = qkv.middleCols(d + h * dh, dh);
    const auto v = qkv.middleCols(2 * d + h * dh, dh);
    Mat<T>& p = probs[h];
    p.noalias() = q * k.transpose();
    p *= scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto row = p.row(i).array();
      row = (row - row.maxCoeff()).exp();
      row /= row.sum();
    }
    out.middleCols(h * dh, dh).noalias() = p * v;
  }
}

template <typename T>
Mat<T> attention_backward(const Mat<T>& qkv, const std::vector<Mat<T>>& probs,
                          const Mat<T>& d_out, int heads) {
  const int d = static_cast<int>(qkv.cols() / 3);
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> d_qkv(qkv.rows(), qkv.cols());
  Mat<T> dp;
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv.middleCols(h * dh, dh);
    const auto k = qkv.middleCols(d + h * dh, dh);
    const auto v = qkv.middleCols(2 * d + h * dh, dh);
    const auto dout = d_out.middleCols(h * dh, dh);
    const Mat<T>& p = probs[h];
    d_qkv.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * dout;
    dp.noalias() = dout * v.transpose();
    // Softmax Jacobian: dS = P o (dP - rowsum(P o dP)).
    const Col<T> inner = (p.array() * dp.array()).rowwise().sum();
    dp = (p.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
    d_qkv.middleCols(h * dh, dh).noalias() = dp * k;
    d_qkv.middleCols(d + h * dh, dh).noalias() = dp.transpose() * q;
  }
  return d_qkv;
}

template <typename T>
void block_forward(const Mat<T>& x, const Mat<T>& cond_act, const BlockParams<T>& p, int heads,
                   BlockTape<T>& tape, Mat<T>& y) {
  const Eigen::Index d = x.cols();
  tape.input = x;
  linear_forward(cond_act, p.modulation, tape.mod);
  const auto shift1 = tape.mod.row(0).segment(0, d);
  const auto scale1 = tape.mod.row(0).segment(d, d);
  const auto gate1 = tape.mod.row(0).segment(2 * d, d);
  const auto shift2 = tape.mod.row(0).segment(3 * d, d);
  const auto scale2 = tape.mod.row(0).segment(4 * d, d);
  const auto gate2 = tape.mod.row(0).segment(5 * d, d);

  layer_norm(x, tape.norm1, tape.rstd1);
  tape.h1 = modulate(tape.norm1, shift1, scale1);
  linear_forward(tape.h1, p.qkv, tape.qkv);
  attention_forward(tape.qkv, heads, tape.attn, tape.probs);
  linear_forward(tape.attn, p.attn_out, tape.attn_proj);
  tape.mid = x + (tape.attn_proj.array().rowwise() * gate1.array()).matrix();

  layer_norm(tape.mid, tape.norm2, tape.rstd2);
  tape.h2 = modulate(tape.norm2, shift2, scale2);
  linear_forward(tape.h2, p.mlp_in, tape.pre_act);
  tape.act = gelu(tape.pre_act);
  linear_forward(tape.act, p.mlp_out, tape.mlp_proj);
  y = tape.mid + (tape.mlp_proj.array().rowwise() * gate2.array()).matrix();
}

// Returns dx; accumulates parameter grads and d(cond_act).
template <typename T>
Mat<T> block_backward(const BlockTape<T>& tape, const Mat<T>& dy, const Mat<T>& cond_act,
                      const BlockParams<T>& p, int heads, BlockParams<T>& g, Mat<T>& d_cond_act) {
  const Eigen::Index d = dy.cols();
  const auto scale1 = tape.mod.row(0).segment(d, d);
  const auto gate1 = tape.mod.row(0).segment(2 * d, d);
  const auto scale2 = tape.mod.row(0).segment(4 * d, d);
  const auto gate2 = tape.mod.row(0).segment(5 * d, d);
  Mat<T> d_mod(1, 6 * d);

  // MLP branch.
  d_mod.block(0, 5 * d, 1, d) = (dy.array() * tape.mlp_proj.array()).colwise().sum();
  const Mat<T> d_mlp = dy.array().rowwise() * gate2.array();
  Mat<T> d_act;
  linear_backward(tape.act, d_mlp, p.mlp_out, g.mlp_out, &d_act);
  const Mat<T> d_pre = d_act.cwiseProduct(gelu_grad(tape.pre_act));
  Mat<T> d_h2;
  linear_backward(tape.h2, d_pre, p.mlp_in, g.mlp_in, &d_h2);
  d_mod.block(0, 3 * d, 1, d) = d_h2.colwise().sum();
  d_mod.block(0, 4 * d, 1, d) = (d_h2.array() * tape.norm2.array()).colwise().sum();
  const Mat<T> d_norm2 = d_h2.array().rowwise() * (scale2.array() + T(1));
  const Mat<T> d_mid = dy + layer_norm_backward(d_norm2, tape.norm2, tape.rstd2);

  // Attention branch.
  d_mod.block(0, 2 * d, 1, d) = (d_mid.array() * tape.attn_proj.array()).colwise().sum();
  const Mat<T> d_proj = d_mid.array().rowwise() * gate1.array();
  Mat<T> d_attn;
  linear_backward(tape.attn, d_proj, p.attn_out, g.attn_out, &d_attn);
  const Mat<T> d_qkv = attention_backward(tape.qkv, tape.probs, d_attn, heads);
  Mat<T> d_h1;
  linear_backward(tape.h1, d_qkv, p.qkv, g.qkv, &d_h1);
  d_mod.block(0, 0, 1, d) = d_h1.colwise().sum();
  d_mod.block(0, d, 1, d) = (d_h1.array() * tape.norm1.array()).colwise().sum();
  const Mat<T> d_norm1 = d_h1.array().rowwise() * (scale1.array() + T(1));
  Mat<T> dx = d_mid + layer_norm_backward(d_norm1, tape.norm1, tape.rstd1);

  Mat<T> d_cond;
  linear_backward(cond_act, d_mod, p.modulation, g.modulation, &d_cond);
  d_cond_act += d_cond;
  return dx;
}

// Patch embedding plus segment and position embeddings.
template <typename T>
Mat<T> embed_tokens(const TokenSequence& seq, const Linear<T>& embed, const Mat<T>& segment_embed,
                    int width) {
  require(seq.consistent(), ErrorKind::kInvalidArgument, "backbone: inconsistent sequence");
  require(seq.dim() == embed.weight.rows(), ErrorKind::kShapeMismatch,
          "backbone: token width " + std::to_string(seq.dim()) + " but patch embedding expects " +
              std::to_string(embed.weight.rows()));
  Mat<T> x;
  linear_forward(Mat<T>(seq.tokens.template cast<T>()), embed, x);
  x += position_embedding<T>(seq.positions, width);
  for (int i = 0; i < seq.size(); ++i) {
    x.row(i) += segment_embed.row(static_cast<int>(seq.segments[i]));
  }
  return x;
}

template <typename T>
void embed_backward(const TokenSequence& seq, const Mat<T>& dx, Linear<T>& g_embed,
                    Mat<T>& g_segment) {
  linear_backward<T>(seq.tokens.template cast<T>(), dx, Linear<T>{}, g_embed, nullptr);
  for (int i = 0; i < seq.size(); ++i) {
    g_segment.row(static_cast<int>(seq.segments[i])) += dx.row(i);
  }
}

template <typename T>
bool all_finite(const Mat<T>& m) {
  return m.allFinite();
}

void xavier(MatF& w, RandomStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.uniform(-a, a));
}

void gaussian(MatF& w, RandomStream& rng, double std) {
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(std * rng.normal());
}

BlockParams<float> init_block(const ModelConfig& cfg, RandomStream& rng) {
  const int d = cfg.width;
  BlockParams<float> b{Linear<float>(d, 6 * d), Linear<float>(d, 3 * d), Linear<float>(d, d),
                       Linear<float>(d, cfg.mlp_width()), Linear<float>(cfg.mlp_width(), d)};
  xavier(b.qkv.weight, rng);
  xavier(b.attn_out.weight, rng);
  xavier(b.mlp_in.weight, rng);
  xavier(b.mlp_out.weight, rng);
  return b;
}

}  // namespace

template <typename T>
Mat<T> position_embedding(std::span<const Position> positions, int width) {
  const int quarter = width / 4;
  Mat<T> emb(static_cast<Eigen::Index>(positions.size()), width);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double coords[2] = {static_cast<double>(positions[i].row),
                              static_cast<double>(positions[i].col)};
    for (int axis = 0; axis < 2; ++axis) {
      for (int k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / quarter);
        const double arg = coords[axis] * omega;
        emb(static_cast<Eigen::Index>(i), axis * 2 * quarter + k) = static_cast<T>(std::sin(arg));
        emb(static_cast<Eigen::Index>(i), axis * 2 * quarter + quarter + k) =
            static_cast<T>(std::cos(arg));
      }
    }
  }
  return emb;
}

template <typename T>
Mat<T> time_frequency_embedding(double t, int dim) {
  const int half = dim / 2;
  Mat<T> emb(1, dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    const double arg = 1000.0 * t * freq;
    emb(0, k) = static_cast<T>(std::cos(arg));
    emb(0, half + k) = static_cast<T>(std::sin(arg));
  }
  return emb;
}

ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RandomStream rng = RandomStream::named(seed, "init");
  const int d = cfg.width;
  const int pp = cfg.patch * cfg.patch;
  ModelParams<float> p;
  p.patch_embed = Linear<float>(pp * cfg.main_channels(), d);
  xavier(p.patch_embed.weight, rng);
  if (cfg.mode == ConditioningMode::kControlNet) {
    p.control_embed = Linear<float>(pp * cfg.control_channels(), d);
    xavier(p.control_embed.weight, rng);
  } else {
    p.control_embed = Linear<float>(0, 0);
  }
  p.segment_embed = MatF(kNumSegments, d);
  gaussian(p.segment_embed, rng, 0.02);
  p.time_in = Linear<float>(cfg.time_freq_dim, d);
  gaussian(p.time_in.weight, rng, 0.02);
  p.time_out = Linear<float>(d, d);
  gaussian(p.time_out.weight, rng, 0.02);
  for (int i = 0; i < cfg.depth; ++i) p.blocks.push_back(init_block(cfg, rng));
  for (int i = 0; i < cfg.effective_control_depth(); ++i) {
    p.control_blocks.push_back(p.blocks[i]);
    p.fusion.emplace_back(d, d);
  }
  p.final_modulation = Linear<float>(d, 2 * d);
  p.output = Linear<float>(d, pp * cfg.latent_channels);
  return p;
}

template <typename T>
void check_param_shapes(const ModelParams<T>& params, const ModelConfig& cfg) {
  const ModelParams<float> reference = init_params(cfg, 0);
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> expected;
  reference.visit([&](const std::string& name, const MatF& m) {
    expected.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  params.visit([&](const std::string& name, const Mat<T>& m) {
    require(i < expected.size(), ErrorKind::kCheckpoint, "unexpected parameter " + name);
    const auto& [ename, shape] = expected[i++];
    require(name == ename && m.rows() == shape.first && m.cols() == shape.second,
            ErrorKind::kCheckpoint,
            "parameter " + name + " has shape " + std::to_string(m.rows()) + "x" +
                std::to_string(m.cols()) + ", config expects " + std::to_string(shape.first) +
                "x" + std::to_string(shape.second));
  });
  require(i == expected.size(), ErrorKind::kCheckpoint, "parameter set incomplete for config");
}

template <typename T>
Mat<T> backbone_forward(const TokenSequence& main, const TokenSequence* control, double t,
                        const ModelParams<T>& params, const ModelConfig& cfg,
                        ForwardTape<T>* tape) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::kInvalidArgument, "backbone: t must lie in [0, 1]");
  const bool use_control = cfg.mode == ConditioningMode::kControlNet;
  require(use_control == (control != nullptr), ErrorKind::kInvalidArgument,
          use_control ? "control_net configuration needs a control sequence"
                      : "control sequence given to a non-control configuration");
  ForwardTape<T> local;
  ForwardTape<T>& tp = tape ? *tape : local;
  const bool keep = tape != nullptr;
  tp.main = &main;
  tp.control = control;
  tp.t = t;

  // Time conditioning vector shared by every modulation.
  tp.time_freq = time_frequency_embedding<T>(t, cfg.time_freq_dim);
  linear_forward(tp.time_freq, params.time_in, tp.time_pre);
  tp.time_act = tp.time_pre.unaryExpr([](T v) { return silu(v); });
  linear_forward(tp.time_act, params.time_out, tp.cond);
  tp.cond_act = tp.cond.unaryExpr([](T v) { return silu(v); });

  Mat<T> x = embed_tokens(main, params.patch_embed, params.segment_embed, cfg.width);
  Mat<T> ctrl;
  const int control_depth = cfg.effective_control_depth();
  if (use_control) {
    require(control->size() == main.size(), ErrorKind::kShapeMismatch,
            "control and main sequences differ in length");
    ctrl = embed_tokens(*control, params.control_embed, params.segment_embed, cfg.width);
  }

  tp.blocks.resize(keep ? cfg.depth : 1);
  tp.control_blocks.resize(keep ? control_depth : (control_depth > 0 ? 1 : 0));
  tp.control_outputs.resize(keep ? control_depth : 0);
  Mat<T> y;
  for (int k = 0; k < cfg.depth; ++k) {
    block_forward(x, tp.cond_act, params.blocks[k], cfg.heads, tp.blocks[keep ? k : 0], y);
    x.swap(y);
    if (k < control_depth) {
      block_forward(ctrl, tp.cond_act, params.control_blocks[k], cfg.heads,
                    tp.control_blocks[keep ? k : 0], y);
      ctrl.swap(y);
      if (keep) tp.control_outputs[k] = ctrl;
      Mat<T> fused;
      linear_forward(ctrl, params.fusion[k], fused);
      x += fused;
    }
  }

  tp.final_input = x;
  linear_forward(tp.cond_act, params.final_modulation, tp.final_mod);
  const Eigen::Index d = cfg.width;
  layer_norm(x, tp.final_norm, tp.final_rstd);
  tp.final_h = modulate(tp.final_norm, tp.final_mod.row(0).segment(0, d), tp.final_mod.row(0).segment(d, d));
  Mat<T> out;
  linear_forward(tp.final_h, params.output, out);
  require(all_finite(out), ErrorKind::kNumeric, "backbone produced non-finite activations");
  return out;
}

template <typename T>
void backbone_backward(const ForwardTape<T>& tp, const Mat<T>& d_output,
                       const ModelParams<T>& params, const ModelConfig& cfg,
                       ModelParams<T>& grads) {
  require(static_cast<int>(tp.blocks.size()) == cfg.depth, ErrorKind::kInvalidArgument,
          "backbone_backward needs a tape recorded with storage");
  const Eigen::Index d = cfg.width;
  Mat<T> d_cond_act = Mat<T>::Zero(1, d);

  // Final layer.
  Mat<T> d_h;
  linear_backward(tp.final_h, d_output, params.output, grads.output, &d_h);
  Mat<T> d_fmod(1, 2 * d);
  d_fmod.block(0, 0, 1, d) = d_h.colwise().sum();
  d_fmod.block(0, d, 1, d) = (d_h.array() * tp.final_norm.array()).colwise().sum();
  const Mat<T> d_norm = d_h.array().rowwise() * (tp.final_mod.row(0).segment(d, d).array() + T(1));
  Mat<T> dx = layer_norm_backward(d_norm, tp.final_norm, tp.final_rstd);
  {
    Mat<T> d_cond;
    linear_backward(tp.cond_act, d_fmod, params.final_modulation, grads.final_modulation, &d_cond);
    d_cond_act += d_cond;
  }

  const int control_depth = cfg.effective_control_depth();
  Mat<T> d_ctrl;
  if (control_depth > 0) d_ctrl = Mat<T>::Zero(dx.rows(), d);
  for (int k = cfg.depth - 1; k >= 0; --k) {
    if (k < control_depth) {
      Mat<T> d_fused_in;
      linear_backward(tp.control_outputs[k], dx, params.fusion[k], grads.fusion[k], &d_fused_in);
      d_ctrl += d_fused_in;
    }
    dx = block_backward(tp.blocks[k], dx, tp.cond_act, params.blocks[k], cfg.heads,
                        grads.blocks[k], d_cond_act);
    if (k < control_depth) {
      d_ctrl = block_backward(tp.control_blocks[k], d_ctrl, tp.cond_act, params.control_blocks[k],
                              cfg.heads, grads.control_blocks[k], d_cond_act);
    }
  }

  embed_backward(*tp.main, dx, grads.patch_embed, grads.segment_embed);
  // With no control blocks the control embedding never reaches the output.
  if (control_depth > 0) {
    embed_backward(*tp.control, d_ctrl, grads.control_embed, grads.segment_embed);
  }

  // Time MLP.
  const Mat<T> d_cond = d_cond_act.cwiseProduct(tp.cond.unaryExpr([](T v) { return silu_grad(v); }));
  Mat<T> d_time_act;
  linear_backward(tp.time_act, d_cond, params.time_out, grads.time_out, &d_time_act);
  const Mat<T> d_time_pre =
      d_time_act.cwiseProduct(tp.time_pre.unaryExpr([](T v) { return silu_grad(v); }));
  linear_backward<T>(tp.time_freq, d_time_pre, params.time_in, grads.time_in, nullptr);
}

template <typename T>
T param_gradients(const TokenSequence& main, const TokenSequence* control, double t,
                  const ModelParams<T>& params, const ModelConfig& cfg,
                  const OutputObjective<T>& objective, ModelParams<T>& grads) {
  ForwardTape<T> tape;
  const Mat<T> out = backbone_forward(main, control, t, params, cfg, &tape);
  Mat<T> d_out = Mat<T>::Zero(out.rows(), out.cols());
  const T loss = objective(out, d_out);
  require(std::isfinite(static_cast<double>(loss)), ErrorKind::kNumeric,
          "objective returned a non-finite loss");
  backbone_backward(tape, d_out, params, cfg, grads);
  return loss;
}

TokenSequence forward(const TokenSequence& seq, double t, const ModelParams<float>& params,
                      const ModelConfig& cfg) {
  TokenSequence out;
  out.tokens = backbone_forward<float>(seq, nullptr, t, params, cfg);
  out.positions = seq.positions;
  out.segments = seq.segments;
  return out;
}

TokenSequence forward_with_control(const TokenSequence& main, const TokenSequence& control,
                                   double t, const ModelParams<float>& params,
                                   const ModelConfig& cfg) {
  require(cfg.mode == ConditioningMode::kControlNet, ErrorKind::kInvalidArgument,
          "forward_with_control requires the control_net configuration");
  TokenSequence out;
  out.tokens = backbone_forward<float>(main, &control, t, params, cfg);
  out.positions = main.positions;
  out.segments = main.segments;
  return out;
}

#define DVTON_INSTANTIATE(T)                                                                  \
  template Mat<T> position_embedding<T>(std::span<const Position>, int);                      \
  template Mat<T> time_frequency_embedding<T>(double, int);                                   \
  template void check_param_shapes<T>(const ModelParams<T>&, const ModelConfig&);             \
  template Mat<T> backbone_forward<T>(const TokenSequence&, const TokenSequence*, double,     \
                                      const ModelParams<T>&, const ModelConfig&,              \
                                      ForwardTape<T>*);                                       \
  template void backbone_backward<T>(const ForwardTape<T>&, const Mat<T>&,                    \
                                     const ModelParams<T>&, const ModelConfig&,               \
                                     ModelParams<T>&);                                        \
  template T param_gradients<T>(const TokenSequence&, const TokenSequence*, double,           \
                                const ModelParams<T>&, const ModelConfig&,                    \
                                const OutputObjective<T>&, ModelParams<T>&);

DVTON_INSTANTIATE(float)
DVTON_INSTANTIATE(double)

#undef DVTON_INSTANTIATE

}  // namespace dvton
