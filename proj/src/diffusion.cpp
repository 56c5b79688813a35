#include "codi/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace codi::diffusion {

// ============================================================================
// NoiseSchedule
// ============================================================================

void NoiseSchedule::validate() const {
  if (!(terminal_time > 0.0)) throw ValidationError("schedule: T must be positive");
  if (step_count < 1) throw ValidationError("schedule: step_count must be >= 1");
  if (!(step_spacing_exponent > 0.0))
    throw ValidationError("schedule: rho must be positive");
  if (!(t_min > 0.0) || !(t_min < terminal_time))
    throw ValidationError("schedule: t_min must lie in (0, T)");
  if (noise_time_log_std < 0.0)
    throw ValidationError("schedule: P_std must be nonnegative");
  if (tail_uniform_fraction < 0.0 || tail_uniform_fraction > 1.0)
    throw ValidationError("schedule: tail fraction must lie in [0, 1]");
}

Vec NoiseSchedule::time_grid() const {
  validate();
  Vec grid;
  grid.reserve(static_cast<std::size_t>(step_count) + 1);
  if (step_count == 1) {
    grid.push_back(terminal_time);
  } else {
    const double inv_rho = 1.0 / step_spacing_exponent;
    const double hi = std::pow(terminal_time, inv_rho);
    const double lo = std::pow(t_min, inv_rho);
    for (int i = 0; i < step_count; ++i) {
      const double frac = static_cast<double>(i) / (step_count - 1);
      grid.push_back(std::pow(hi + frac * (lo - hi), step_spacing_exponent));
    }
  }
  grid.push_back(0.0);
  return grid;
}

NoiseSchedule NoiseSchedule::scaled_by(double data_std) const {
  if (!(data_std > 0.0)) throw ValidationError("schedule: data std must be positive");
  NoiseSchedule s = *this;
  s.terminal_time = terminal_time * data_std;
  s.t_min = t_min * data_std;
  s.noise_time_log_mean = noise_time_log_mean + std::log(data_std);
  return s;
}

double noise_time_sample(const NoiseSchedule& schedule, Rng& rng) {
  if (schedule.tail_uniform_fraction > 0.0 &&
      rng.uniform() < schedule.tail_uniform_fraction) {
    // Cover [exp(P_mean), T]: the log-normal thins out well below the
    // terminal time the sampler starts from.
    const double lo =
        std::log(std::max(schedule.t_min, std::exp(schedule.noise_time_log_mean)));
    const double hi = std::log(schedule.terminal_time);
    return std::exp(rng.uniform(lo, hi));
  }
  const double g =
      schedule.noise_time_log_mean + schedule.noise_time_log_std * rng.normal();
  return std::clamp(std::exp(g), schedule.t_min, schedule.terminal_time);
}

// ============================================================================
// Perturbation kernel
// ============================================================================

NoisePoint perturb(const Vec& x, double t, const Vec& eps) {
  require_same_dim(x.size(), eps.size(), "perturb");
  if (t < 0.0) throw ValidationError("perturb: noise time must be nonnegative");
  NoisePoint p;
  p.noise_time = t;
  p.value.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p.value[i] = x[i] + t * eps[i];
  return p;
}

// ============================================================================
// ScoreField default Jacobian (central differences)
// ============================================================================

void ScoreField::jacobian_diag(std::span<const double> x, double t,
                               std::span<const double> cond,
                               std::span<double> out) const {
  const double h = 1e-5 * std::max(1.0, t);
  Vec xp(x.begin(), x.end());
  Vec sp(x.size()), sm(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double x0 = xp[d];
    xp[d] = x0 + h;
    eval(xp, t, cond, sp);
    xp[d] = x0 - h;
    eval(xp, t, cond, sm);
    xp[d] = x0;
    out[d] = (sp[d] - sm[d]) / (2.0 * h);
  }
}

// ============================================================================
// GMM analytics
// ============================================================================

void GmmParams::validate() const {
  if (weights.empty() || means.size() != weights.size() ||
      variances.size() != weights.size())
    throw ValidationError("gmm: component lists must be nonempty and same length");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ValidationError("gmm: weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("gmm: weights must sum to 1 within 1e-9");
  const std::size_t d = means[0].size();
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != d || variances[k].size() != d)
      throw ValidationError("gmm: inconsistent component dimensions");
    for (double v : variances[k]) {
      if (!(v > 0.0)) throw ValidationError("gmm: variances must be positive");
    }
  }
}

namespace {

// Per-component log density of the time-t marginal at x.
void gmm_component_logps(const GmmParams& p, std::span<const double> x, double t,
                         Vec& logps) {
  const std::size_t K = p.weights.size();
  const std::size_t D = x.size();
  logps.resize(K);
  constexpr double kLog2Pi = 1.8378770664093454836;
  for (std::size_t k = 0; k < K; ++k) {
    double lp = std::log(p.weights[k]);
    for (std::size_t d = 0; d < D; ++d) {
      const double v = p.variances[k][d] + t * t;
      const double r = x[d] - p.means[k][d];
      lp -= 0.5 * (kLog2Pi + std::log(v) + r * r / v);
    }
    logps[k] = lp;
  }
}

// Softmax responsibilities from component log densities.
void responsibilities(const Vec& logps, Vec& resp) {
  const double mx = *std::max_element(logps.begin(), logps.end());
  double z = 0.0;
  resp.resize(logps.size());
  for (std::size_t k = 0; k < logps.size(); ++k) {
    resp[k] = std::exp(logps[k] - mx);
    z += resp[k];
  }
  for (double& r : resp) r /= z;
}

}  // namespace

double gmm_log_density(const GmmParams& params, const Vec& x, double t) {
  params.validate();
  require_same_dim(x.size(), static_cast<std::size_t>(params.dim()), "gmm");
  Vec logps;
  gmm_component_logps(params, x, t, logps);
  const double mx = *std::max_element(logps.begin(), logps.end());
  double z = 0.0;
  for (double lp : logps) z += std::exp(lp - mx);
  return mx + std::log(z);
}

Vec analytic_score_gmm(const GmmParams& params, const Vec& x, double t) {
  params.validate();
  require_same_dim(x.size(), static_cast<std::size_t>(params.dim()), "gmm");
  Vec logps, resp;
  gmm_component_logps(params, x, t, logps);
  responsibilities(logps, resp);
  Vec score(x.size(), 0.0);
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double v = params.variances[k][d] + t * t;
      score[d] += resp[k] * (params.means[k][d] - x[d]) / v;
    }
  }
  return score;
}

Vec gmm_score_jacobian_diag(const GmmParams& params, const Vec& x, double t) {
  // With m_kd = (mu_kd - x_d)/v_kd and responsibilities r_k,
  //   d(score_d)/dx_d = sum_k r_k (m_kd^2 - 1/v_kd) - (sum_k r_k m_kd)^2.
  params.validate();
  Vec logps, resp;
  gmm_component_logps(params, x, t, logps);
  responsibilities(logps, resp);
  Vec jac(x.size(), 0.0);
  for (std::size_t d = 0; d < x.size(); ++d) {
    double s = 0.0, q = 0.0;
    for (std::size_t k = 0; k < params.weights.size(); ++k) {
      const double v = params.variances[k][d] + t * t;
      const double m = (params.means[k][d] - x[d]) / v;
      s += resp[k] * m;
      q += resp[k] * (m * m - 1.0 / v);
    }
    jac[d] = q - s * s;
  }
  return jac;
}

double gmm_cdf_1d(const GmmParams& params, double x, double t) {
  params.validate();
  if (params.dim() != 1) throw ValidationError("gmm_cdf_1d: 1-D mixtures only");
  double c = 0.0;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    const double sd = std::sqrt(params.variances[k][0] + t * t);
    c += params.weights[k] * 0.5 * std::erfc(-(x - params.means[k][0]) / (sd * std::sqrt(2.0)));
  }
  return c;
}

void GmmScoreField::eval(std::span<const double> x, double t,
                         std::span<const double>, std::span<double> out) const {
  Vec xv(x.begin(), x.end());
  Vec s = analytic_score_gmm(params_, xv, t);
  std::copy(s.begin(), s.end(), out.begin());
}

void GmmScoreField::jacobian_diag(std::span<const double> x, double t,
                                  std::span<const double>,
                                  std::span<double> out) const {
  Vec xv(x.begin(), x.end());
  Vec j = gmm_score_jacobian_diag(params_, xv, t);
  std::copy(j.begin(), j.end(), out.begin());
}

// ============================================================================
// Reverse SDE
// ============================================================================

Vec reverse_sde_sample(const ScoreField& score, const NoiseSchedule& schedule,
                       const Vec& cond, Rng& rng) {
  const Vec grid = schedule.time_grid();
  const int dim = score.dim();

  Vec x(dim);
  for (double& v : x) v = schedule.terminal_time * rng.normal();

  Vec s(dim);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double t = grid[i];
    const double t_next = grid[i + 1];
    const double dt_mag = t - t_next;  // grid is decreasing, dt < 0

    score.eval(x, t, cond, s);
    if (!all_finite(s))
      throw NumericError("reverse_sde_sample: non-finite score", static_cast<int>(i));

    for (int d = 0; d < dim; ++d) x[d] += 2.0 * t * s[d] * dt_mag;
    if (t_next > 0.0) {
      const double amp = std::sqrt(2.0 * t * dt_mag);
      for (int d = 0; d < dim; ++d) x[d] += amp * rng.normal();
    }
  }
  return x;
}

std::vector<Vec> reverse_sde_sample_batch(const ScoreField& score,
                                          const NoiseSchedule& schedule,
                                          const Vec& cond, int count,
                                          const Rng& rng, Exec mode) {
  std::vector<Vec> out(count);
  for_index(count, mode, [&](std::int64_t i) {
    Rng local = rng.split(static_cast<std::uint64_t>(i));
    out[i] = reverse_sde_sample(score, schedule, cond, local);
  });
  return out;
}

}  // namespace codi::diffusion
