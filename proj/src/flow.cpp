#include "dvton/flow.hpp"

#include <cmath>

#include "dvton/error.hpp"

namespace dvton {

namespace {

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* op) {
  require(a.same_shape(b), ErrorKind::kShapeMismatch, std::string(op) + ": latent shapes differ");
}

}  // namespace

std::string to_string(TimeDistribution d) {
  return d == TimeDistribution::kUniform ? "uniform" : "logit_normal";
}

TimeDistribution time_distribution_from_string(const std::string& s) {
  if (s == "uniform") return TimeDistribution::kUniform;
  if (s == "logit_normal") return TimeDistribution::kLogitNormal;
  fail(ErrorKind::kInvalidArgument, "unknown time distribution '" + s + "'");
}

FlowState interpolate(const LatentGrid& x_data, const LatentGrid& x_noise, double t) {
  require_same_shape(x_data, x_noise, "interpolate");
  require(t >= 0.0 && t <= 1.0, ErrorKind::kInvalidArgument, "interpolate: t outside [0, 1]");
  FlowState s{t, LatentGrid(x_data.h, x_data.w, x_data.c)};
  // Endpoints are returned exactly.
  if (t == 0.0) {
    s.x = x_data;
  } else if (t == 1.0) {
    s.x = x_noise;
  } else {
    for (std::size_t i = 0; i < s.x.data.size(); ++i) {
      s.x.data[i] = static_cast<float>((1.0 - t) * x_data.data[i] + t * x_noise.data[i]);
    }
  }
  return s;
}

LatentGrid velocity_target(const LatentGrid& x_data, const LatentGrid& x_noise) {
  require_same_shape(x_data, x_noise, "velocity_target");
  LatentGrid v(x_data.h, x_data.w, x_data.c);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = x_noise.data[i] - x_data.data[i];
  return v;
}

double flow_loss(const LatentGrid& x_data, const LatentGrid& x_noise, double t,
                 const VelocityField& model) {
  const FlowState state = interpolate(x_data, x_noise, t);
  const LatentGrid target = velocity_target(x_data, x_noise);
  const LatentGrid pred = model(state.x, t);
  require_same_shape(pred, target, "flow_loss");
  require(pred.all_finite(), ErrorKind::kNumeric, "flow_loss: non-finite model output");
  double sum = 0.0;
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(target.data.size());
}

double flow_loss(const LatentGrid& x_data, const VelocityField& model, double t,
                 std::uint64_t seed) {
  RandomStream rng(seed);
  return flow_loss(x_data, gaussian_like(x_data.h, x_data.w, x_data.c, rng), t, model);
}

LatentGrid gaussian_like(int h, int w, int c, RandomStream& rng) {
  LatentGrid g(h, w, c);
  for (float& v : g.data) v = static_cast<float>(rng.normal());
  return g;
}

double draw_time(RandomStream& rng, TimeDistribution dist) {
  if (dist == TimeDistribution::kUniform) return rng.uniform();
  // Logit-normal(0, 1).
  return 1.0 / (1.0 + std::exp(-rng.normal()));
}

LatentGrid integrate(LatentGrid x, const VelocityField& model, int steps) {
  require(steps >= 1, ErrorKind::kInvalidArgument, "sampler needs at least one step");
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / steps;
    const LatentGrid v = model(x, t);
    require(v.same_shape(x), ErrorKind::kShapeMismatch, "sampler: velocity shape differs from state");
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] = static_cast<float>(x.data[i] - dt * v.data[i]);
    }
    require(x.all_finite(), ErrorKind::kNumeric,
            "sampler: non-finite state at step " + std::to_string(k));
  }
  return x;
}

LatentGrid initial_noise(int h, int w, int c, std::uint64_t seed) {
  RandomStream rng = RandomStream::named(seed, "sampler-noise");
  return gaussian_like(h, w, c, rng);
}

LatentGrid sample(int h, int w, int c, const VelocityField& model, const SamplerConfig& scfg) {
  return integrate(initial_noise(h, w, c, scfg.seed), model, scfg.steps);
}

}  // namespace dvton
