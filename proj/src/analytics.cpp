#include "codi/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace codi::analytics {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ============================================================================
// DiscreteDist
// ============================================================================

void DiscreteDist::validate() const {
  if (probs.empty()) throw ValidationError("discrete dist: empty support");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ValidationError("discrete dist: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ValidationError("discrete dist: probabilities must sum to 1 within 1e-12");
}

DiscreteDist DiscreteDist::normalized(Vec weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("discrete dist: negative weight");
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("discrete dist: zero total mass");
  for (double& w : weights) w /= sum;
  // Renormalize once more so the sum is exact to the last ulp.
  double s2 = 0.0;
  for (double w : weights) s2 += w;
  for (double& w : weights) w /= s2;
  return DiscreteDist{std::move(weights)};
}

DiscreteDist DiscreteDist::random(std::size_t n, Rng& rng) {
  Vec w(n);
  for (double& v : w) v = 0.05 + rng.uniform();
  return normalized(std::move(w));
}

// ============================================================================
// Tilt and KL
// ============================================================================

TiltResult tilt(const DiscreteDist& prior, const Vec& costs, double lambda) {
  prior.validate();
  require_same_dim(prior.size(), costs.size(), "tilt");
  if (!(lambda > 0.0)) throw ValidationError("tilt: lambda must be positive");

  // log(prior_i) - J_i/lambda, stabilized by the max shift.
  Vec logw(prior.size(), -kInf);
  double mx = -kInf;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (prior.probs[i] > 0.0 && costs[i] < kInf) {
      logw[i] = std::log(prior.probs[i]) - costs[i] / lambda;
      mx = std::max(mx, logw[i]);
    }
  }
  if (mx == -kInf) throw DegenerateWeightsError("tilt: no cell with finite weight");

  Vec w(prior.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (logw[i] > -kInf) {
      w[i] = std::exp(logw[i] - mx);
      z += w[i];
    }
  }
  for (double& v : w) v /= z;
  TiltResult r;
  r.dist = DiscreteDist{std::move(w)};
  r.log_z = mx + std::log(z);
  return r;
}

double kl_divergence(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_dim(p.size(), q.size(), "kl_divergence");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.probs[i] > 0.0) {
      if (!(q.probs[i] > 0.0)) return kInf;
      kl += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
    }
  }
  return kl;
}

// ============================================================================
// Identity checks
// ============================================================================

KlDecomposition kl_decomposition_check(const DiscreteDist& target,
                                       const DiscreteDist& prior, const Vec& costs,
                                       double lambda) {
  target.validate();
  prior.validate();
  require_same_dim(target.size(), prior.size(), "kl_decomposition_check");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.probs[i] > 0.0 && !(prior.probs[i] > 0.0))
      throw AbsoluteContinuityError(
          "kl_decomposition_check: target has mass on a zero-prior cell");
  }

  const TiltResult tilted = tilt(prior, costs, lambda);
  KlDecomposition out;
  out.lhs = kl_divergence(target, tilted.dist);

  double expected_cost = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i)
    expected_cost += target.probs[i] * costs[i];
  out.rhs = kl_divergence(target, prior) + tilted.log_z + expected_cost / lambda;
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

Vec optimal_cost(const DiscreteDist& target, const DiscreteDist& prior,
                 double lambda) {
  target.validate();
  prior.validate();
  require_same_dim(target.size(), prior.size(), "optimal_cost");
  if (!(lambda > 0.0)) throw ValidationError("optimal_cost: lambda must be positive");

  Vec cost(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.probs[i] > 0.0) {
      if (!(prior.probs[i] > 0.0))
        throw AbsoluteContinuityError(
            "optimal_cost: target has mass on a zero-prior cell");
      cost[i] = lambda * std::log(prior.probs[i] / target.probs[i]);
    } else {
      cost[i] = kInf;  // tilts the prior mass to zero there
    }
  }
  return cost;
}

double total_variation(const DiscreteDist& a, const DiscreteDist& b) {
  require_same_dim(a.size(), b.size(), "total_variation");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a.probs[i] - b.probs[i]);
  return 0.5 * tv;
}

// ============================================================================
// Tilted Gaussian oracle
// ============================================================================

namespace {

// 2x2 (or 1x1) symmetric inverse; throws when not positive definite.
std::array<double, 4> sym_inverse(const std::array<double, 4>& m, int dim) {
  std::array<double, 4> inv{};
  if (dim == 1) {
    if (!(m[0] > 0.0)) throw ValidationError("matrix not positive definite");
    inv[0] = 1.0 / m[0];
  } else {
    const double det = m[0] * m[3] - m[1] * m[2];
    if (!(m[0] > 0.0) || !(det > 0.0))
      throw ValidationError("matrix not positive definite");
    inv[0] = m[3] / det;
    inv[1] = -m[1] / det;
    inv[2] = -m[2] / det;
    inv[3] = m[0] / det;
  }
  return inv;
}

Vec mat_vec(const std::array<double, 4>& m, const Vec& v, int dim) {
  Vec out(dim, 0.0);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) out[i] += m[i * 2 + j] * v[j];
  return out;
}

}  // namespace

Moments tilted_oracle_moments(const GaussianTilt& spec) {
  if (spec.dim != 1 && spec.dim != 2)
    throw ValidationError("tilted_oracle_moments: dim must be 1 or 2");
  if (!(spec.lambda > 0.0)) throw ValidationError("tilted_oracle_moments: lambda > 0");

  const auto prior_prec = sym_inverse(spec.prior_cov, spec.dim);
  std::array<double, 4> prec{};
  for (int i = 0; i < 4; ++i) prec[i] = prior_prec[i] + spec.cost_quad[i] / spec.lambda;

  Moments m;
  m.cov = sym_inverse(prec, spec.dim);  // validates positive definiteness
  Vec rhs = mat_vec(prior_prec, spec.prior_mean, spec.dim);
  Vec qc = mat_vec(spec.cost_quad, spec.cost_center, spec.dim);
  for (int i = 0; i < spec.dim; ++i) rhs[i] += qc[i] / spec.lambda;
  m.mean = mat_vec(m.cov, rhs, spec.dim);
  return m;
}

// ============================================================================
// Adaptive Simpson quadrature
// ============================================================================

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double fa,
                     double b, double fb, double m, double fm, double whole,
                     double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  return adaptive_step(f, a, fa, b, fb, m, fm, simpson(a, fa, b, fb, fm), tol, 40);
}

Moments tilted_moments_quadrature(const GaussianTilt& spec, double tol) {
  const Moments closed = tilted_oracle_moments(spec);  // box placement only

  const auto prior_prec = sym_inverse(spec.prior_cov, spec.dim);
  auto log_unnorm = [&](const Vec& a) {
    Vec dm(spec.dim), dc(spec.dim);
    for (int i = 0; i < spec.dim; ++i) {
      dm[i] = a[i] - spec.prior_mean[i];
      dc[i] = a[i] - spec.cost_center[i];
    }
    const Vec pm = mat_vec(prior_prec, dm, spec.dim);
    const Vec qc = mat_vec(spec.cost_quad, dc, spec.dim);
    return -0.5 * dot(dm, pm) - 0.5 * dot(dc, qc) / spec.lambda;
  };

  Moments m;
  m.mean.assign(spec.dim, 0.0);
  if (spec.dim == 1) {
    const double c = closed.mean[0], w = 9.0 * std::sqrt(closed.cov[0]);
    auto f = [&](double x, int p) {
      return std::pow(x - c, p) * std::exp(log_unnorm({x}));
    };
    const double z = integrate([&](double x) { return f(x, 0); }, c - w, c + w, tol);
    const double m1 = integrate([&](double x) { return f(x, 1); }, c - w, c + w, tol);
    const double m2 = integrate([&](double x) { return f(x, 2); }, c - w, c + w, tol);
    m.mean[0] = c + m1 / z;
    m.cov[0] = m2 / z - (m1 / z) * (m1 / z);
  } else {
    // Iterated 1-D quadrature of the 2-D integrand over a +-8 sigma box; the
    // inner integrals run two decades tighter so their noise stays below the
    // outer termination test.
    const double cx = closed.mean[0], cy = closed.mean[1];
    const double wx = 8.0 * std::sqrt(closed.cov[0]);
    const double wy = 8.0 * std::sqrt(closed.cov[3]);
    auto moment = [&](int px, int py) {
      return integrate(
          [&](double x) {
            return integrate(
                [&](double y) {
                  return std::pow(x - cx, px) * std::pow(y - cy, py) *
                         std::exp(log_unnorm({x, y}));
                },
                cy - wy, cy + wy, tol * 1e-2);
          },
          cx - wx, cx + wx, tol);
    };
    const double z = moment(0, 0);
    const double mx = moment(1, 0) / z, my = moment(0, 1) / z;
    m.mean = {cx + mx, cy + my};
    m.cov[0] = moment(2, 0) / z - mx * mx;
    m.cov[3] = moment(0, 2) / z - my * my;
    m.cov[1] = m.cov[2] = moment(1, 1) / z - mx * my;
  }
  return m;
}

// ============================================================================
// Dependence ratio
// ============================================================================

DependenceRatio dependence_ratio_check(const Vec& joint, std::size_t rows,
                                       std::size_t cols) {
  if (joint.size() != rows * cols)
    throw DimensionError("dependence_ratio_check: joint size mismatch");
  DiscreteDist{joint}.validate();

  DependenceRatio out;
  out.marginal_rows.assign(rows, 0.0);
  out.marginal_cols.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      out.marginal_rows[r] += joint[r * cols + c];
      out.marginal_cols[c] += joint[r * cols + c];
    }
  for (double m : out.marginal_rows)
    if (!(m > 0.0)) throw ValidationError("dependence ratio: zero row marginal");
  for (double m : out.marginal_cols)
    if (!(m > 0.0)) throw ValidationError("dependence ratio: zero column marginal");

  out.ratio.assign(rows * cols, 0.0);
  out.reconstruction_error = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double prod = out.marginal_rows[r] * out.marginal_cols[c];
      out.ratio[r * cols + c] = joint[r * cols + c] / prod;
      out.reconstruction_error =
          std::max(out.reconstruction_error,
                   std::abs(out.ratio[r * cols + c] * prod - joint[r * cols + c]));
    }
  return out;
}

// ============================================================================
// Identity suite
// ============================================================================

bool IdentityReport::all_pass() const {
  for (const auto& l : lines)
    if (!l.pass) return false;
  return true;
}

IdentityReport run_identity_suite(int instances, std::uint64_t seed) {
  Rng rng(seed);
  IdentityReport report;

  double worst_decomp = 0.0;
  double worst_recovery = 0.0;
  for (int i = 0; i < instances; ++i) {
    auto target = DiscreteDist::random(8, rng);
    auto prior = DiscreteDist::random(8, rng);
    Vec costs(8);
    for (double& c : costs) c = rng.uniform(-2.0, 2.0);

    const auto decomp = kl_decomposition_check(target, prior, costs, 1.0);
    worst_decomp = std::max(worst_decomp, decomp.gap);

    const Vec jstar = optimal_cost(target, prior, 1.0);
    const auto recovered = tilt(prior, jstar, 1.0);
    worst_recovery = std::max(worst_recovery, total_variation(recovered.dist, target));
  }
  report.lines.push_back({"kl-decomposition gap", worst_decomp, 1e-10,
                          worst_decomp < 1e-10});
  report.lines.push_back({"optimal-cost recovery tv", worst_recovery, 1e-10,
                          worst_recovery < 1e-10});

  double worst_ratio = 0.0;
  for (int i = 0; i < instances; ++i) {
    Vec joint(36);
    for (double& v : joint) v = 0.05 + rng.uniform();
    double s = 0.0;
    for (double v : joint) s += v;
    for (double& v : joint) v /= s;
    double s2 = 0.0;
    for (double v : joint) s2 += v;
    joint[35] += 1.0 - s2;  // make the sum exact
    const auto dep = dependence_ratio_check(joint, 6, 6);
    worst_ratio = std::max(worst_ratio, dep.reconstruction_error);
  }
  report.lines.push_back({"dependence-ratio reconstruction", worst_ratio, 1e-12,
                          worst_ratio < 1e-12});

  // Gaussian tilt closed form vs quadrature, 1-D and 2-D coupling cases.
  double worst_gauss = 0.0;
  {
    GaussianTilt g1;
    g1.dim = 1;
    g1.prior_mean = {0.0};
    g1.prior_cov = {1.0, 0, 0, 0};
    g1.cost_quad = {1.0, 0, 0, 0};
    g1.cost_center = {0.0};
    g1.lambda = 1.0;
    const auto closed = tilted_oracle_moments(g1);
    const auto quad = tilted_moments_quadrature(g1, 1e-9);
    worst_gauss = std::max(worst_gauss,
                           std::abs(closed.cov[0] - quad.cov[0]) / closed.cov[0]);

    GaussianTilt g2;
    g2.dim = 2;
    g2.prior_mean = {0.0, 0.0};
    g2.prior_cov = {1.0, 0.0, 0.0, 1.0};
    g2.cost_quad = {1.0, -1.0, -1.0, 1.0};  // 0.5 (a1 - a2)^2
    g2.cost_center = {0.0, 0.0};
    g2.lambda = 1.0;
    const auto c2 = tilted_oracle_moments(g2);
    const auto q2 = tilted_moments_quadrature(g2, 1e-8);
    const double var_diff_closed = c2.cov[0] + c2.cov[3] - 2.0 * c2.cov[1];
    const double var_diff_quad = q2.cov[0] + q2.cov[3] - 2.0 * q2.cov[1];
    worst_gauss = std::max(
        worst_gauss, std::abs(var_diff_closed - var_diff_quad) / var_diff_closed);
  }
  report.lines.push_back({"gaussian tilt closed form vs quadrature", worst_gauss,
                          1e-6, worst_gauss < 1e-6});

  return report;
}

}  // namespace codi::analytics
