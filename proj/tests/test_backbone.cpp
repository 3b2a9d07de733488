#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvton/backbone.hpp"
#include "dvton/error.hpp"
#include "support.hpp"

using namespace dvton;
using dvton::test::random_latent;

namespace {

ModelConfig micro(ConditioningMode mode = ConditioningMode::kTokenConcat) {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.patch = 2;
  cfg.latent_channels = 12;
  cfg.time_freq_dim = 32;
  cfg.mode = mode;
  cfg.control_depth = 1;
  return cfg;
}

template <typename T>
void perturb(ModelParams<T>& p, RandomStream& rng, double scale) {
  p.visit([&](const std::string&, Mat<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<T>(scale * rng.normal());
  });
}

TokenSequence random_tokens(RandomStream& rng, int grid, int channels, Segment seg = Segment::kNoise) {
  return extract_patches(random_latent(rng, 2 * grid, 2 * grid, channels), seg, 2);
}

TokenSequence three_segments(RandomStream& rng, int grid, int channels) {
  std::vector<TokenSequence> parts{random_tokens(rng, grid, channels, Segment::kNoise),
                                   random_tokens(rng, grid, channels, Segment::kReference),
                                   random_tokens(rng, grid, channels, Segment::kMaskedSource)};
  return concat_sequences(parts);
}

}  // namespace

TEST_CASE("zero-initialized output is exactly zero for any token count") {
  ModelConfig cfg = micro();
  const ModelParams<float> params = init_params(cfg, 3);
  RandomStream rng(1);
  for (int grid : {1, 2}) {
    const TokenSequence seq = random_tokens(rng, grid, 12);
    const TokenSequence out = forward(seq, 0.3, params, cfg);
    CHECK(out.size() == seq.size());
    CHECK(out.tokens.cwiseAbs().maxCoeff() == 0.0f);
  }
  cfg.width = 32;
  cfg.heads = 4;
  const TokenSequence big = three_segments(rng, 16, 12);
  REQUIRE(big.size() == 768);
  const TokenSequence out = forward(big, 0.9, init_params(cfg, 4), cfg);
  CHECK(out.size() == 768);
  CHECK(out.tokens.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("permuting tokens with their positions permutes the output") {
  const ModelConfig cfg = micro();
  ModelParams<float> params = init_params(cfg, 5);
  RandomStream rng(2);
  perturb(params, rng, 0.1);
  const TokenSequence seq = three_segments(rng, 3, 12);
  const MatF out = forward(seq, 0.4, params, cfg).tokens;
  std::vector<int> perm(seq.size());
  for (int i = 0; i < seq.size(); ++i) perm[i] = i;
  for (int i = seq.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  TokenSequence shuffled = seq;
  for (int i = 0; i < seq.size(); ++i) {
    shuffled.tokens.row(i) = seq.tokens.row(perm[i]);
    shuffled.positions[i] = seq.positions[perm[i]];
    shuffled.segments[i] = seq.segments[perm[i]];
  }
  const MatF out2 = forward(shuffled, 0.4, params, cfg).tokens;
  REQUIRE(out.cwiseAbs().maxCoeff() > 0.0f);
  for (int i = 0; i < seq.size(); ++i) {
    CHECK((out2.row(i) - out.row(perm[i])).cwiseAbs().maxCoeff() < 1e-5f);
  }
}

TEST_CASE("forward is deterministic") {
  const ModelConfig cfg = micro();
  ModelParams<float> params = init_params(cfg, 6);
  RandomStream rng(3);
  perturb(params, rng, 0.1);
  const TokenSequence seq = three_segments(rng, 2, 12);
  CHECK(forward(seq, 0.5, params, cfg).tokens == forward(seq, 0.5, params, cfg).tokens);
}

TEST_CASE("control branch is the identity at initialization") {
  const ModelConfig ctrl_cfg = micro(ConditioningMode::kControlNet);
  ModelConfig plain_cfg = ctrl_cfg;
  plain_cfg.mode = ConditioningMode::kTokenConcat;
  ModelParams<float> params = init_params(ctrl_cfg, 7);
  RandomStream rng(4);
  // Nonzero everywhere except the fusion projections.
  params.visit([&](const std::string& name, MatF& m) {
    if (name.rfind("fusion", 0) == 0) return;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<float>(0.1 * rng.normal());
  });
  ModelParams<float> plain = params;
  plain.control_embed = Linear<float>(0, 0);
  plain.control_blocks.clear();
  plain.fusion.clear();

  const TokenSequence main = random_tokens(rng, 3, 12);
  const TokenSequence ctrl = random_tokens(rng, 3, 13, Segment::kMaskedSource);
  const MatF base = forward(main, 0.2, plain, plain_cfg).tokens;
  CHECK(forward_with_control(main, ctrl, 0.2, params, ctrl_cfg).tokens == base);

  ModelConfig zero_depth = ctrl_cfg;
  zero_depth.control_depth = 0;
  ModelParams<float> no_blocks = params;
  no_blocks.control_blocks.clear();
  no_blocks.fusion.clear();
  CHECK(forward_with_control(main, ctrl, 0.2, no_blocks, zero_depth).tokens == base);

  // Nonzero fusion with a zero control input: the branch still contributes
  // through its biases and embeddings.
  ModelParams<float> fused = params;
  for (Eigen::Index i = 0; i < fused.fusion[0].weight.size(); ++i) {
    fused.fusion[0].weight.data()[i] = static_cast<float>(0.1 * rng.normal());
  }
  TokenSequence zero_ctrl = ctrl;
  zero_ctrl.tokens.setZero();
  const MatF with_branch = forward_with_control(main, zero_ctrl, 0.2, fused, ctrl_cfg).tokens;
  CHECK((with_branch - base).cwiseAbs().maxCoeff() > 0.0f);
  ModelParams<float> unbiased = fused;
  unbiased.control_embed.bias.setZero();
  unbiased.segment_embed.row(static_cast<int>(Segment::kMaskedSource)).setZero();
  for (auto* lin : {&unbiased.control_blocks[0].qkv, &unbiased.control_blocks[0].attn_out,
                    &unbiased.control_blocks[0].mlp_in, &unbiased.control_blocks[0].mlp_out}) {
    lin->bias.setZero();
  }
  CHECK((forward_with_control(main, zero_ctrl, 0.2, unbiased, ctrl_cfg).tokens - with_branch)
            .cwiseAbs()
            .maxCoeff() > 0.0f);
}

TEST_CASE("control sequence presence must match the configuration") {
  const ModelConfig cfg = micro(ConditioningMode::kControlNet);
  const ModelParams<float> params = init_params(cfg, 8);
  RandomStream rng(5);
  const TokenSequence main = random_tokens(rng, 2, 12);
  CHECK_THROWS_AS(backbone_forward<float>(main, nullptr, 0.5, params, cfg), Error);
  const ModelConfig plain = micro();
  const TokenSequence ctrl = random_tokens(rng, 2, 13);
  CHECK_THROWS_AS(backbone_forward<float>(main, &ctrl, 0.5, init_params(plain, 8), plain), Error);
}

TEST_CASE("init copies control blocks and zeroes fusion") {
  const ModelConfig cfg = [] {
    ModelConfig c = micro(ConditioningMode::kControlNet);
    c.depth = 4;
    c.control_depth = 2;
    return c;
  }();
  const ModelParams<float> p = init_params(cfg, 9);
  REQUIRE(p.control_blocks.size() == 2);
  CHECK(p.control_blocks[1].qkv.weight == p.blocks[1].qkv.weight);
  CHECK(p.fusion[0].weight.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(p.output.weight.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(p.blocks[0].modulation.weight.cwiseAbs().maxCoeff() == 0.0f);
  CHECK_NOTHROW(check_param_shapes(p, cfg));
  CHECK_THROWS_AS(check_param_shapes(p, micro()), Error);
}

TEST_CASE("position and time embeddings") {
  const std::vector<Position> pos{{0, 0}, {3, 5}};
  const MatF e = position_embedding<float>(pos, 16);
  CHECK(e.rows() == 2);
  CHECK(e.cols() == 16);
  // Quarter k of each half: sin then cos of coordinate * 10000^(-k/4).
  CHECK(e(1, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(e(1, 4) == doctest::Approx(std::cos(3.0)));
  CHECK(e(1, 8) == doctest::Approx(std::sin(5.0)));
  CHECK(e(1, 12) == doctest::Approx(std::cos(5.0)));
  CHECK(e(0, 0) == 0.0f);
  CHECK(e(0, 4) == 1.0f);

  const MatF t0 = time_frequency_embedding<float>(0.0, 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(t0(0, k) == 1.0f);
    CHECK(t0(0, 4 + k) == 0.0f);
  }
  const MatF t1 = time_frequency_embedding<float>(0.5, 8);
  CHECK(t1(0, 0) == doctest::Approx(std::cos(500.0)));
}

TEST_CASE("gradient identities") {
  const ModelConfig cfg = micro();
  ModelParams<double> params = init_params(cfg, 10).cast<double>();
  RandomStream rng(6);
  perturb(params, rng, 0.1);
  const TokenSequence seq = three_segments(rng, 2, 12);

  ModelParams<double> g0 = params.zeros_like();
  param_gradients<double>(seq, nullptr, 0.3, params, cfg,
                          [](const MatD&, MatD&) { return 4.0; }, g0);
  g0.visit([](const std::string&, const MatD& m) { CHECK((m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0)); });

  MatD w = MatD::Zero(seq.size(), 48);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  auto linear_loss = [&](double scale) {
    return [&, scale](const MatD& out, MatD& d) {
      d = scale * w;
      return scale * (out.array() * w.array()).sum();
    };
  };
  ModelParams<double> g1 = params.zeros_like();
  ModelParams<double> g2 = params.zeros_like();
  param_gradients<double>(seq, nullptr, 0.3, params, cfg, linear_loss(1.0), g1);
  param_gradients<double>(seq, nullptr, 0.3, params, cfg, linear_loss(2.0), g2);
  std::vector<const MatD*> a;
  std::vector<const MatD*> b;
  g1.visit([&](const std::string&, const MatD& m) { a.push_back(&m); });
  g2.visit([&](const std::string&, const MatD& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->size() == 0) continue;
    CHECK((*b[i] - 2.0 * *a[i]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a[i]->cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("f64 gradients match central differences") {
  for (ConditioningMode mode :
       {ConditioningMode::kTokenConcat, ConditioningMode::kChannelConcat, ConditioningMode::kControlNet}) {
    ModelConfig cfg = micro(mode);
    ModelParams<double> params = init_params(cfg, 11).cast<double>();
    RandomStream rng(7);
    perturb(params, rng, 0.1);
    const int ch = cfg.main_channels();
    const TokenSequence main = mode == ConditioningMode::kTokenConcat ? three_segments(rng, 2, ch)
                                                                      : random_tokens(rng, 2, ch);
    const TokenSequence ctrl = random_tokens(rng, 2, cfg.control_channels(), Segment::kMaskedSource);
    const TokenSequence* cp = mode == ConditioningMode::kControlNet ? &ctrl : nullptr;
    MatD w(main.size(), 48);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    const OutputObjective<double> obj = [&](const MatD& out, MatD& d) {
      d = 2.0 * (out - w) / static_cast<double>(w.size());
      return (out - w).squaredNorm() / static_cast<double>(w.size());
    };
    ModelParams<double> grads = params.zeros_like();
    param_gradients<double>(main, cp, 0.6, params, cfg, obj, grads);

    std::vector<MatD*> p;
    std::vector<MatD*> g;
    params.visit([&](const std::string&, MatD& m) { p.push_back(&m); });
    grads.visit([&](const std::string&, MatD& m) { g.push_back(&m); });
    MatD scratch;
    auto loss_at = [&]() {
      const MatD out = backbone_forward<double>(main, cp, 0.6, params, cfg);
      scratch = MatD::Zero(out.rows(), out.cols());
      return obj(out, scratch);
    };
    int checked = 0;
    for (int s = 0; s < 24; ++s) {
      const std::size_t a = rng.below(p.size());
      if (p[a]->size() == 0) continue;
      const Eigen::Index i = static_cast<Eigen::Index>(rng.below(p[a]->size()));
      double& x = p[a]->data()[i];
      const double orig = x;
      const double eps = 1e-5;
      x = orig + eps;
      const double up = loss_at();
      x = orig - eps;
      const double down = loss_at();
      x = orig;
      const double fd = (up - down) / (2 * eps);
      const double an = g[a]->data()[i];
      INFO("fd " << fd << " an " << an);
      CHECK(std::abs(fd - an) <= 1e-6 * std::max(std::abs(fd), std::abs(an)) + 1e-9);
      ++checked;
    }
    CHECK(checked > 10);
  }
}
