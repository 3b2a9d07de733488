#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvton/error.hpp"
#include "dvton/flow.hpp"
#include "support.hpp"

using namespace dvton;
using dvton::test::random_latent;

namespace {

LatentGrid affine(const LatentGrid& a, float sa, const LatentGrid& b, float sb) {
  LatentGrid out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * a.data[i] + sb * b.data[i];
  return out;
}

double max_abs_diff(const LatentGrid& a, const LatentGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(double(a.data[i]) - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("interpolation endpoints and midpoint") {
  RandomStream rng(1);
  const LatentGrid data = random_latent(rng, 4, 4, 3);
  const LatentGrid noise = random_latent(rng, 4, 4, 3);
  CHECK(interpolate(data, noise, 0.0).x == data);
  CHECK(interpolate(data, noise, 1.0).x == noise);
  CHECK(max_abs_diff(interpolate(data, noise, 0.5).x, affine(data, 0.5f, noise, 0.5f)) < 1e-6);
  CHECK_THROWS_AS(interpolate(data, random_latent(rng, 4, 4, 2), 0.5), Error);
}

TEST_CASE("velocity target is the derivative of the path") {
  RandomStream rng(2);
  const LatentGrid data = random_latent(rng, 3, 5, 4);
  const LatentGrid noise = random_latent(rng, 3, 5, 4);
  const LatentGrid v = velocity_target(data, noise);
  for (double t : {0.1, 0.5, 0.9}) {
    const double h = 1e-3;
    const LatentGrid up = interpolate(data, noise, t + h).x;
    const LatentGrid down = interpolate(data, noise, t - h).x;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
      CHECK((double(up.data[i]) - down.data[i]) / (2 * h) == doctest::Approx(v.data[i]).epsilon(1e-3));
    }
  }
}

TEST_CASE("flow loss is zero for the exact field and positive otherwise") {
  RandomStream rng(3);
  const LatentGrid data = random_latent(rng, 4, 4, 2);
  const LatentGrid noise = random_latent(rng, 4, 4, 2);
  const LatentGrid v = velocity_target(data, noise);
  const VelocityField exact = [&](const LatentGrid&, double) { return v; };
  const VelocityField zero = [&](const LatentGrid& x, double) { return LatentGrid(x.h, x.w, x.c); };
  CHECK(flow_loss(data, noise, 0.3, exact) == 0.0);
  double energy = 0.0;
  for (float x : v.data) energy += double(x) * x;
  CHECK(flow_loss(data, noise, 0.3, zero) == doctest::Approx(energy / v.data.size()));
  CHECK(flow_loss(data, zero, 0.4, 9) == flow_loss(data, zero, 0.4, 9));
  CHECK(flow_loss(data, zero, 0.4, 9) != flow_loss(data, zero, 0.4, 10));
}

TEST_CASE("Euler integration is exact for a constant velocity") {
  RandomStream rng(4);
  const LatentGrid data = random_latent(rng, 4, 4, 3);
  const LatentGrid noise = random_latent(rng, 4, 4, 3);
  const LatentGrid v = velocity_target(data, noise);
  const VelocityField field = [&](const LatentGrid&, double) { return v; };
  for (int steps : {1, 7, 28}) {
    CHECK(max_abs_diff(integrate(noise, field, steps), data) < 1e-5);
  }
}

TEST_CASE("Euler integration visits the uniform grid from 1 to 0") {
  std::vector<double> times;
  const VelocityField field = [&](const LatentGrid& x, double t) {
    times.push_back(t);
    return LatentGrid(x.h, x.w, x.c);
  };
  integrate(LatentGrid(1, 1, 1), field, 4);
  REQUIRE(times.size() == 4);
  CHECK(times[0] == 1.0);
  CHECK(times[1] == doctest::Approx(0.75));
  CHECK(times[3] == doctest::Approx(0.25));
  CHECK_THROWS_AS(integrate(LatentGrid(1, 1, 1), field, 0), Error);
}

TEST_CASE("Euler matches the closed form of a linear field") {
  // f(x, t) = x has the backward Euler product (1 - 1/n)^n.
  const VelocityField field = [](const LatentGrid& x, double) { return x; };
  LatentGrid x0(1, 1, 1, 1.0f);
  for (int n : {2, 10, 28}) {
    CHECK(integrate(x0, field, n).data[0] == doctest::Approx(std::pow(1.0 - 1.0 / n, n)).epsilon(1e-5));
  }
}

TEST_CASE("sampler defaults and reproducibility") {
  SamplerConfig scfg;
  CHECK(scfg.steps == 28);
  int calls = 0;
  const VelocityField field = [&](const LatentGrid& x, double t) {
    ++calls;
    return affine(x, static_cast<float>(t), x, 0.0f);
  };
  scfg.seed = 42;
  const LatentGrid a = dvton::sample(4, 4, 3, field, scfg);
  CHECK(calls == 28);
  const LatentGrid b = dvton::sample(4, 4, 3, field, scfg);
  CHECK(a == b);
  scfg.seed = 43;
  CHECK_FALSE(dvton::sample(4, 4, 3, field, scfg) == a);
  CHECK(initial_noise(4, 4, 3, 42) == initial_noise(4, 4, 3, 42));
}

TEST_CASE("time draws lie in the unit interval") {
  RandomStream rng(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double t = draw_time(rng, TimeDistribution::kUniform);
    CHECK((t >= 0.0 && t <= 1.0));
    sum += t;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) {
    const double t = draw_time(rng, TimeDistribution::kLogitNormal);
    CHECK((t > 0.0 && t < 1.0));
  }
  CHECK(time_distribution_from_string(to_string(TimeDistribution::kLogitNormal)) ==
        TimeDistribution::kLogitNormal);
}
