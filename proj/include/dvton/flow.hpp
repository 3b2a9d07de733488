#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dvton/latent.hpp"
#include "dvton/rng.hpp"

namespace dvton {

// Convention: t = 0 is data, t = 1 is noise.
struct FlowState {
  double t = 0.0;
  LatentGrid x;
};

enum class TimeDistribution { kUniform, kLogitNormal };
std::string to_string(TimeDistribution d);
TimeDistribution time_distribution_from_string(const std::string& s);

enum class Schedule { kUniform };

struct SamplerConfig {
  static constexpr int kDefaultSteps = 28;
  int steps = kDefaultSteps;
  Schedule schedule = Schedule::kUniform;
  std::uint64_t seed = 0;
  bool operator==(const SamplerConfig&) const = default;
};

// Velocity field f(x_t, t) over latent grids.
using VelocityField = std::function<LatentGrid(const LatentGrid& x, double t)>;

// x_t = (1 - t) x_data + t x_noise.
FlowState interpolate(const LatentGrid& x_data, const LatentGrid& x_noise, double t);

// d x_t / dt for the linear path: x_noise - x_data.
LatentGrid velocity_target(const LatentGrid& x_data, const LatentGrid& x_noise);

// Mean squared velocity error ||f(x_t, t) - (x_noise - x_data)||^2 / n.
double flow_loss(const LatentGrid& x_data, const LatentGrid& x_noise, double t,
                 const VelocityField& model);
// Same, with the noise drawn from `seed`.
double flow_loss(const LatentGrid& x_data, const VelocityField& model, double t,
                 std::uint64_t seed);

LatentGrid gaussian_like(int h, int w, int c, RandomStream& rng);
double draw_time(RandomStream& rng, TimeDistribution dist);

// Explicit Euler from t = 1 to t = 0 on a uniform grid: x <- x - dt f(x, t).
LatentGrid integrate(LatentGrid x_noise, const VelocityField& model, int steps);

// Draws the starting noise from scfg.seed, then integrates.
LatentGrid sample(int h, int w, int c, const VelocityField& model, const SamplerConfig& scfg);

// Noise the sampler starts from for a given seed and shape.
LatentGrid initial_noise(int h, int w, int c, std::uint64_t seed);

}  // namespace dvton
