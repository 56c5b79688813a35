#pragma once

/**
 * Exact identity checkers for the composition math, computed on finite
 * supports where everything is a sum: KL decomposition of the tilted policy,
 * the optimally compensating cost, tilted-Gaussian moments (closed form,
 * cross-checked by adaptive quadrature), and the dependence-ratio
 * factorization of a discrete joint.
 */

#include <array>
#include <functional>
#include <string>

#include "codi/common.hpp"

namespace codi::analytics {

// ============================================================================
// Discrete distributions
// ============================================================================

struct DiscreteDist {
  Vec probs;

  std::size_t size() const { return probs.size(); }
  void validate() const;
  static DiscreteDist normalized(Vec weights);
  static DiscreteDist random(std::size_t n, Rng& rng);
};

/// exp(-J/lambda) * prior, normalized by summation (log-space stabilized).
/// Also returns log Z with Z = sum_i prior_i exp(-J_i / lambda), the tilt
/// normalizer that makes the decomposition identity exact.
struct TiltResult {
  DiscreteDist dist;
  double log_z = 0.0;
};
TiltResult tilt(const DiscreteDist& prior, const Vec& costs, double lambda);

/// KL(p || q) by direct summation; +infinity when p has mass where q has none.
double kl_divergence(const DiscreteDist& p, const DiscreteDist& q);

// ============================================================================
// Identity checks
// ============================================================================

struct KlDecomposition {
  double lhs = 0.0;  // KL(target || tilted prior), computed directly
  double rhs = 0.0;  // KL(target || prior) + log Z + E_target[J]/lambda
  double gap = 0.0;
};

/// Verifies the error decomposition of the tilted policy. Throws
/// AbsoluteContinuityError when the target has mass on a zero-prior cell.
KlDecomposition kl_decomposition_check(const DiscreteDist& target,
                                       const DiscreteDist& prior, const Vec& costs,
                                       double lambda);

/// Cost table J* = lambda * log(prior/target), for which tilting the prior
/// reproduces the target exactly. Cells with zero target mass get +infinity.
Vec optimal_cost(const DiscreteDist& target, const DiscreteDist& prior,
                 double lambda);

double total_variation(const DiscreteDist& a, const DiscreteDist& b);

// ============================================================================
// Tilted Gaussian oracle (1-D / 2-D)
// ============================================================================

/// J(a) = 0.5 (a - c)' Q (a - c); the tilt exp(-J/lambda) * N(m, S) is again
/// Gaussian with precision S^-1 + Q/lambda.
struct GaussianTilt {
  int dim = 1;
  Vec prior_mean;                 // m
  std::array<double, 4> prior_cov{};   // S, row-major (dim x dim)
  std::array<double, 4> cost_quad{};   // Q, row-major
  Vec cost_center;                // c
  double lambda = 1.0;
};

struct Moments {
  Vec mean;
  std::array<double, 4> cov{};
};

/// Closed-form tilted moments. Throws ValidationError if the tilted precision
/// is not positive definite.
Moments tilted_oracle_moments(const GaussianTilt& spec);

/// The same moments by adaptive Simpson quadrature over a wide box.
Moments tilted_moments_quadrature(const GaussianTilt& spec, double tol = 1e-10);

/// Adaptive Simpson integration on [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-10);

// ============================================================================
// Dependence-ratio factorization
// ============================================================================

struct DependenceRatio {
  Vec marginal_rows;        // first-axis marginal
  Vec marginal_cols;        // second-axis marginal
  Vec ratio;                // rows x cols, joint / (m_r * m_c)
  double reconstruction_error = 0.0;  // max |joint - ratio * m_r * m_c|
};

/// Factorizes a discrete 2-D joint (rows x cols, row-major probabilities)
/// into its marginals and dependence ratio. Throws ValidationError when a
/// marginal cell is zero.
DependenceRatio dependence_ratio_check(const Vec& joint, std::size_t rows,
                                       std::size_t cols);

// ============================================================================
// Report for the `verify` CLI subcommand
// ============================================================================

struct IdentityReport {
  struct Line {
    std::string name;
    double measured_gap = 0.0;
    double tolerance = 0.0;
    bool pass = false;
  };
  std::vector<Line> lines;
  bool all_pass() const;
};

/// Runs the full identity suite on `instances` random cases per identity.
IdentityReport run_identity_suite(int instances, std::uint64_t seed);

}  // namespace codi::analytics
