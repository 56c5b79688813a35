#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "codi/diffusion.hpp"
#include "test_util.hpp"

using namespace codi;
using namespace codi::diffusion;

namespace {

GmmParams two_mode_gmm() {
  GmmParams p;
  p.weights = {0.5, 0.5};
  p.means = {{-2.0}, {2.0}};
  p.variances = {{0.0625}, {0.0625}};  // std 0.25
  return p;
}

}  // namespace

TEST_CASE("perturb: t=0 returns the clean point") {
  const auto p = perturb({1.0, 2.0}, 0.0, {0.7, -0.3});
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == 2.0);
  CHECK(p.noise_time == 0.0);
}

TEST_CASE("perturb: affine map") {
  const auto p = perturb({0.0}, 2.0, {1.5});
  CHECK(p.value[0] == doctest::Approx(3.0));
}

TEST_CASE("perturb: dimension mismatch throws") {
  CHECK_THROWS_AS(perturb({1.0, 2.0}, 1.0, {1.0}), DimensionError);
}

TEST_CASE("perturb: Monte-Carlo variance matches t^2") {
  Rng rng(11);
  const double t = 0.5;
  const Vec x = {0.3, -1.0};
  std::vector<double> d0, d1;
  for (int i = 0; i < 100000; ++i) {
    const Vec eps = rng.normal_vec(2);
    const auto p = perturb(x, t, eps);
    d0.push_back(p.value[0] - x[0]);
    d1.push_back(p.value[1] - x[1]);
  }
  CHECK(testutil::variance(d0) > 0.24);
  CHECK(testutil::variance(d0) < 0.26);
  CHECK(testutil::variance(d1) > 0.24);
  CHECK(testutil::variance(d1) < 0.26);
}

TEST_CASE("noise_time_sample: degenerate log-normal is deterministic") {
  NoiseSchedule s;
  s.noise_time_log_mean = 0.0;
  s.noise_time_log_std = 0.0;
  s.tail_uniform_fraction = 0.0;
  Rng rng(3);
  for (int i = 0; i < 16; ++i) CHECK(noise_time_sample(s, rng) == 1.0);
}

TEST_CASE("noise_time_sample: median matches exp(P_mean), draws clamped") {
  NoiseSchedule s;  // P_mean=-1.2, P_std=1.2 defaults
  Rng rng(5);
  std::vector<double> draws;
  for (int i = 0; i < 100000; ++i) {
    const double t = noise_time_sample(s, rng);
    CHECK(t <= s.terminal_time);
    CHECK(t >= s.t_min);
    draws.push_back(t);
  }
  std::sort(draws.begin(), draws.end());
  const double median = draws[draws.size() / 2];
  CHECK(median > 0.27);
  CHECK(median < 0.34);
}

TEST_CASE("time grid: strictly decreasing from T to exactly 0") {
  NoiseSchedule s;
  const Vec grid = s.time_grid();
  CHECK(grid.size() == 51);
  CHECK(grid.front() == doctest::Approx(s.terminal_time));
  CHECK(grid.back() == 0.0);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) CHECK(grid[i] > grid[i + 1]);

  NoiseSchedule one;
  one.step_count = 1;
  const Vec g1 = one.time_grid();
  CHECK(g1.size() == 2);
  CHECK(g1[0] == one.terminal_time);
  CHECK(g1[1] == 0.0);
}

TEST_CASE("reverse_sde_sample: vanishing dynamics at tiny T") {
  NoiseSchedule s;
  s.terminal_time = 1e-6;
  s.t_min = 1e-7;
  s.step_count = 1;
  FunctionScoreField zero(1, [](auto, double, auto, std::span<double> out) {
    out[0] = 0.0;
  });
  Rng rng(7);
  for (int i = 0; i < 64; ++i) {
    const Vec x = reverse_sde_sample(zero, s, {}, rng);
    CHECK(std::abs(x[0]) < 1e-5);
  }
}

TEST_CASE("reverse_sde_sample: unit Gaussian target moments") {
  // Euler-Maruyama carries ~1/N variance bias (~9% at N=50), so run the
  // moment check on a 100-step grid.
  NoiseSchedule s;  // T=80 for unit-scale data
  s.step_count = 100;
  FunctionScoreField field(1, [](std::span<const double> x, double t, auto,
                                 std::span<double> out) {
    out[0] = -x[0] / (1.0 + t * t);
  });
  const auto samples = reverse_sde_sample_batch(field, s, {}, 10000, Rng(42));
  const auto xs = testutil::column(samples, 0);
  CHECK(std::abs(testutil::mean(xs)) < 0.05);
  CHECK(testutil::variance(xs) > 0.9);
  CHECK(testutil::variance(xs) < 1.1);
}

TEST_CASE("reverse_sde_sample: two-mode GMM within Kolmogorov distance 0.03") {
  const GmmParams gmm = two_mode_gmm();
  const double data_std = std::sqrt(4.0 + 0.0625);
  NoiseSchedule s = NoiseSchedule{}.scaled_by(data_std);
  GmmScoreField field(gmm);
  const auto samples = reverse_sde_sample_batch(field, s, {}, 10000, Rng(4242));
  const double ks = testutil::ks_distance(
      testutil::column(samples, 0),
      [&](double x) { return gmm_cdf_1d(gmm, x, 0.0); });
  CHECK(ks < 0.03);
}

TEST_CASE("reverse_sde_sample: non-finite score reports the step") {
  NoiseSchedule s;
  FunctionScoreField bad(1, [](auto, double, auto, std::span<double> out) {
    out[0] = std::numeric_limits<double>::quiet_NaN();
  });
  Rng rng(1);
  try {
    reverse_sde_sample(bad, s, {}, rng);
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(e.step == 0);
  }
}

TEST_CASE("reverse_sde_sample_batch: serial and parallel are bit-identical") {
  NoiseSchedule s;
  s.step_count = 10;
  FunctionScoreField field(2, [](std::span<const double> x, double t, auto,
                                 std::span<double> out) {
    out[0] = -x[0] / (1.0 + t * t);
    out[1] = -x[1] / (1.0 + t * t);
  });
  const auto a = reverse_sde_sample_batch(field, s, {}, 64, Rng(9), Exec::Serial);
  const auto b = reverse_sde_sample_batch(field, s, {}, 64, Rng(9), Exec::Parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i][0] == b[i][0]);
    CHECK(a[i][1] == b[i][1]);
  }
}

TEST_CASE("analytic_score_gmm: single component closed form") {
  GmmParams p;
  p.weights = {1.0};
  p.means = {{1.5, -0.5}};
  p.variances = {{0.25, 0.25}};
  const double t = 0.7;
  const Vec x = {0.2, 0.9};
  const Vec s = analytic_score_gmm(p, x, t);
  for (int d = 0; d < 2; ++d) {
    const double expect = (p.means[0][d] - x[d]) / (0.25 + t * t);
    CHECK(s[d] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("analytic_score_gmm: symmetric mixture vanishes at the origin") {
  const Vec s = analytic_score_gmm(two_mode_gmm(), {0.0}, 0.3);
  CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("analytic_score_gmm: matches finite differences of the log-density") {
  const GmmParams gmm = two_mode_gmm();
  const double h = 1e-6;

  SUBCASE("pinned point near a mode at t=0") {
    const double x = 1.9;
    const double fd = (gmm_log_density(gmm, {x + h}, 0.0) -
                       gmm_log_density(gmm, {x - h}, 0.0)) /
                      (2.0 * h);
    const Vec s = analytic_score_gmm(gmm, {x}, 0.0);
    CHECK(std::abs(s[0] - fd) < 1e-6);
  }

  SUBCASE("20 random points, relative error below 1e-5") {
    GmmParams p;
    p.weights = {0.3, 0.45, 0.25};
    p.means = {{-1.0, 0.5}, {0.8, -0.2}, {0.1, 1.2}};
    p.variances = {{0.5, 0.8}, {0.3, 0.4}, {0.9, 0.6}};
    Rng rng(17);
    for (int i = 0; i < 20; ++i) {
      const Vec x = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
      const double t = rng.uniform(0.05, 1.5);
      const Vec s = analytic_score_gmm(p, x, t);
      for (int d = 0; d < 2; ++d) {
        Vec xp = x, xm = x;
        xp[d] += h;
        xm[d] -= h;
        const double fd =
            (gmm_log_density(p, xp, t) - gmm_log_density(p, xm, t)) / (2.0 * h);
        CHECK(std::abs(s[d] - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
      }
    }
  }
}

TEST_CASE("analytic_score_gmm: unnormalized weights are rejected") {
  GmmParams p;
  p.weights = {0.6, 0.6};
  p.means = {{0.0}, {1.0}};
  p.variances = {{1.0}, {1.0}};
  CHECK_THROWS_AS(analytic_score_gmm(p, {0.0}, 0.1), ValidationError);
}

TEST_CASE("gmm jacobian diagonal matches finite differences") {
  const GmmParams gmm = two_mode_gmm();
  Rng rng(23);
  for (int i = 0; i < 10; ++i) {
    const Vec x = {rng.uniform(-3.0, 3.0)};
    const double t = rng.uniform(0.1, 2.0);
    const double h = 1e-5;
    const double fd = (analytic_score_gmm(gmm, {x[0] + h}, t)[0] -
                       analytic_score_gmm(gmm, {x[0] - h}, t)[0]) /
                      (2.0 * h);
    const Vec j = gmm_score_jacobian_diag(gmm, x, t);
    CHECK(j[0] == doctest::Approx(fd).epsilon(1e-5));
  }
}
