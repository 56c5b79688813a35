#pragma once

/**
 * Forward perturbation kernel, noise-time sampling, and reverse-time SDE
 * integration against an arbitrary score field.
 *
 * Conventions: the forward kernel is N(x(t); x, t^2 I), so noise-time t is the
 * perturbation standard deviation. The reverse SDE is
 *   dx = -2 t * score(x, t) dt + sqrt(2 t) dW,  integrated from t=T down to 0
 * on a geometric time grid; no noise is injected on the final step to t=0.
 */

#include <functional>
#include <span>

#include "codi/common.hpp"

namespace codi::diffusion {

// ============================================================================
// Noise schedule
// ============================================================================

struct NoiseSchedule {
  double terminal_time = 80.0;  // T
  int step_count = 50;          // N_steps
  double step_spacing_exponent = 7.0;
  double t_min = 0.002;
  double noise_time_log_mean = -1.2;  // P_mean
  double noise_time_log_std = 1.2;    // P_std

  // Fraction of training noise times drawn log-uniformly over [exp(P_mean), T]
  // instead of log-normally. Raw-score networks are evaluated near T by the
  // sampler, and the log-normal alone leaves that region untrained.
  double tail_uniform_fraction = 0.05;

  void validate() const;

  /// Strictly decreasing grid: [T, ..., t_min, 0], step_count integration
  /// intervals plus the final noiseless interval to 0.
  Vec time_grid() const;

  /// Schedule with all time scales multiplied by the data standard deviation.
  NoiseSchedule scaled_by(double data_std) const;
};

/// t = exp(g), g ~ Normal(P_mean, P_std^2), clamped to [t_min, T].
double noise_time_sample(const NoiseSchedule& schedule, Rng& rng);

// ============================================================================
// Perturbation kernel
// ============================================================================

struct NoisePoint {
  Vec value;
  double noise_time = 0.0;
};

/// x + t * eps under the Gaussian kernel.
NoisePoint perturb(const Vec& x, double t, const Vec& eps);

// ============================================================================
// Score fields
// ============================================================================

/// A score field maps (noisy vector, noise time, conditioning) to a score
/// vector of the same dimension as the input. Implementations must be
/// deterministic and safe to evaluate concurrently.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual int dim() const = 0;

  virtual void eval(std::span<const double> x, double t,
                    std::span<const double> cond, std::span<double> out) const = 0;

  /// Diagonal of d(score)/dx. Default: central finite differences of eval.
  virtual void jacobian_diag(std::span<const double> x, double t,
                             std::span<const double> cond,
                             std::span<double> out) const;

  Vec eval(const Vec& x, double t, const Vec& cond) const {
    Vec out(x.size());
    eval(std::span<const double>(x), t, std::span<const double>(cond),
         std::span<double>(out));
    return out;
  }
};

/// Score field defined by a plain function, for tests and analytic cases.
class FunctionScoreField final : public ScoreField {
 public:
  using Fn = std::function<void(std::span<const double>, double,
                                std::span<const double>, std::span<double>)>;
  FunctionScoreField(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  void eval(std::span<const double> x, double t, std::span<const double> cond,
            std::span<double> out) const override {
    fn_(x, t, cond, out);
  }

 private:
  int dim_;
  Fn fn_;
};

// ============================================================================
// Gaussian mixtures with inflated covariances (analytic reference scores)
// ============================================================================

/// Diagonal-covariance GMM. Under the forward kernel the time-t marginal is
/// the same mixture with variances inflated by t^2, which gives an exact
/// score, log-density, CDF, and score Jacobian for oracle tests.
struct GmmParams {
  Vec weights;                // component weights, positive, sum to 1
  std::vector<Vec> means;     // per-component mean
  std::vector<Vec> variances; // per-component diagonal variance

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  void validate() const;
};

Vec analytic_score_gmm(const GmmParams& params, const Vec& x, double t);
double gmm_log_density(const GmmParams& params, const Vec& x, double t);
Vec gmm_score_jacobian_diag(const GmmParams& params, const Vec& x, double t);

/// Exact CDF of the time-t marginal; 1-D mixtures only.
double gmm_cdf_1d(const GmmParams& params, double x, double t);

class GmmScoreField final : public ScoreField {
 public:
  explicit GmmScoreField(GmmParams params) : params_(std::move(params)) {
    params_.validate();
  }
  int dim() const override { return params_.dim(); }
  void eval(std::span<const double> x, double t, std::span<const double>,
            std::span<double> out) const override;
  void jacobian_diag(std::span<const double> x, double t, std::span<const double>,
                     std::span<double> out) const override;
  const GmmParams& params() const { return params_; }

 private:
  GmmParams params_;
};

// ============================================================================
// Reverse-time SDE sampling
// ============================================================================

/// Euler-Maruyama integration of the reverse SDE from x(T) ~ N(0, T^2 I).
/// Throws NumericError (with the step index) if the score goes non-finite.
Vec reverse_sde_sample(const ScoreField& score, const NoiseSchedule& schedule,
                       const Vec& cond, Rng& rng);

/// Batch sampling; sample i uses the child stream rng.split(i), so Serial and
/// Parallel execution produce identical output.
std::vector<Vec> reverse_sde_sample_batch(const ScoreField& score,
                                          const NoiseSchedule& schedule,
                                          const Vec& cond, int count,
                                          const Rng& rng,
                                          Exec mode = Exec::Parallel);

}  // namespace codi::diffusion
