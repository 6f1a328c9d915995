#pragma once

#include "nclab/bias.hpp"
#include "nclab/core.hpp"
#include "nclab/loss.hpp"

#include <cmath>
#include <limits>

/// Simplex-ETF construction, the analytic collapse minimizer, the reduced
/// two-variable objective over (rho, b), and the BCE lower bound with its
/// tangency constants.
namespace nclab {

struct EtfSpec {
  int K = 2;
  int d = 1;
  double rho = 1.0;                    // target squared Frobenius norm
  std::uint64_t orientation_seed = 0;  // picks the embedding in R^d

  void validate() const {
    if (K < 2) fail("etf_spec", "K must be >= 2");
    if (d < K - 1)
      fail("etf_spec", "simplex ETF needs d >= K - 1 (got K = " + std::to_string(K) +
                           ", d = " + std::to_string(d) + ")");
    if (!(rho > 0)) fail("etf_spec", "rho must be > 0");
  }
};

/// K rows of equal norm rho/K, pairwise inner products -rho/(K(K-1)), zero
/// row sum: W W^T = rho/(K-1) (I - 11^T/K). The frame lives in a (K-1)-dim
/// subspace whose orientation comes from a seeded Gaussian QR.
inline Matrix simplex_etf(const EtfSpec& spec) {
  spec.validate();
  const int K = spec.K;
  // Orthonormal basis V (K x K-1) of the span of the centering projector.
  Matrix C = Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K);
  Eigen::HouseholderQR<Matrix> vqr(C.leftCols(K - 1));
  Matrix V = vqr.householderQ() * Matrix::Identity(K, K - 1);
  // Orthonormal orientation U (d x K-1) from the seeded Gaussian.
  Rng rng(spec.orientation_seed);
  Matrix Gdraw(spec.d, K - 1);
  for (int j = 0; j < K - 1; ++j)
    for (int i = 0; i < spec.d; ++i) Gdraw(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> uqr(Gdraw);
  Matrix U = uqr.householderQ() * Matrix::Identity(spec.d, K - 1);
  return std::sqrt(spec.rho / (K - 1.0)) * V * U.transpose();
}

/// Collapse state at (rho, b_star): ETF classifier, every feature of class k
/// equal to a*w_k with a = sqrt(lambda_w/(n lambda_h)), constant bias.
inline ModelState analytic_minimizer(const HyperParams& hp, double rho, double b_star,
                                     std::uint64_t orientation_seed) {
  hp.validate();
  if (!hp.etf_feasible())
    fail("etf_spec", "analytic minimizer needs d >= K - 1");
  if (!(rho > 0)) fail("etf_spec", "rho must be > 0");
  ModelState s;
  s.W = simplex_etf(EtfSpec{hp.K, hp.d, rho, orientation_seed});
  s.H.resize(hp.d, hp.N());
  const double a = hp.a();
  for (int k = 0; k < hp.K; ++k)
    for (int i = 0; i < hp.n; ++i)
      s.H.col(static_cast<Eigen::Index>(k) * hp.n + i) = a * s.W.row(k).transpose();
  s.b = Vector::Constant(hp.K, b_star);
  return s;
}

/// Objective restricted to the symmetric collapse family: per-sample loss at
/// the two score values plus lambda_w*rho + (lambda_b/2) K b^2 (the H decay
/// folds into lambda_w*rho through the coupling a).
inline double reduced_objective(LossKind kind, double rho, double b, const HyperParams& hp) {
  hp.validate();
  if (!(rho >= 0)) fail("reduced_objective", "rho must be >= 0");
  const double a = hp.a();
  const double K = hp.K;
  const double zpos = a * rho / K - b;
  const double zneg = -a * rho / (K * (K - 1.0)) - b;
  double loss = 0.0;
  switch (kind) {
    case LossKind::BCE:
      loss = softplus(-zpos) + (K - 1.0) * softplus(zneg);
      break;
    case LossKind::CE:
      // b cancels in the score differences.
      loss = std::log1p((K - 1.0) * std::exp(-a * rho / (K - 1.0)));
      break;
    default:
      fail("reduced_objective", "only CE and BCE have a reduced form");
  }
  return loss + hp.lambda_w * rho + 0.5 * hp.lambda_b * K * b * b;
}

struct BceLowerBound {
  double value = 0.0;
  /// Set when lambda_b = 0 makes the quadratic-completion term divide by
  /// zero with a nonzero numerator; value is then -inf.
  bool lambda_b_inapplicable = false;
};

/// Tangent-line lower bound on the objective at any critical point, as a
/// function of the tangency constants c1, c2 > 0. Tight exactly at
/// c1 = exp(a rho/K - b*), c2 = exp(b* + a rho/(K(K-1))).
inline BceLowerBound bce_lower_bound(double rho, double c1, double c2, const HyperParams& hp) {
  hp.validate();
  if (!(rho >= 0)) fail("bce_lower_bound", "rho must be >= 0");
  if (!(c1 > 0) || !(c2 > 0)) fail("bce_lower_bound", "c1, c2 must be > 0");
  const double K = hp.K;
  const double s1 = 1.0 / (1.0 + c1);
  const double s2 = 1.0 / (1.0 + c2);
  const double bracket = hp.lambda_w - hp.a() / K * (s1 + s2);
  const double C = (c1 * std::log1p(1.0 / c1) + std::log1p(c1)) * s1 +
                   (K - 1.0) * (c2 * std::log1p(1.0 / c2) + std::log1p(c2)) * s2;
  const double u = (K - 1.0) * s2 - s1;
  BceLowerBound out;
  if (hp.lambda_b > 0.0) {
    out.value = bracket * rho - u * u / (2.0 * K * hp.lambda_b) + C;
  } else if (u == 0.0) {
    out.value = bracket * rho + C;
  } else {
    out.value = -std::numeric_limits<double>::infinity();
    out.lambda_b_inapplicable = true;
  }
  return out;
}

struct ReducedMinimum {
  double rho = 0.0;
  double b = 0.0;
  double value = 0.0;
};

namespace detail {
inline double reduced_profile_bias(LossKind kind, double rho, const HyperParams& hp) {
  if (kind == LossKind::BCE) return solve_bias(BiasProblem::from_hyper(rho, hp));
  return 0.0;  // CE: quadratic bias penalty alone, minimized at 0
}
}  // namespace detail

/// Global minimum of the reduced objective: coarse log-spaced rho scan with
/// the exact per-rho bias, then golden-section refinement of the (convex)
/// profile.
inline ReducedMinimum reduced_minimum(LossKind kind, const HyperParams& hp) {
  hp.validate();
  if (kind != LossKind::CE && kind != LossKind::BCE)
    fail("reduced_minimum", "only CE and BCE have a reduced form");
  const auto profile = [&](double rho) {
    return reduced_objective(kind, rho, detail::reduced_profile_bias(kind, rho, hp), hp);
  };
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> grid;
  for (int e = -60; e <= 80; ++e) grid.push_back(std::pow(10.0, 0.1 * e));
  for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
    const double v = profile(grid[i]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = best > 0 ? grid[best - 1] : 0.0;
  double hi = best + 1 < static_cast<int>(grid.size()) ? grid[best + 1]
                                                       : 2.0 * grid[best];
  // Golden-section until the bracket is ~1e-12 wide (relative to rho).
  const double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = profile(x1);
  double f2 = profile(x2);
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = profile(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = profile(x2);
    }
  }
  ReducedMinimum out;
  out.rho = 0.5 * (lo + hi);
  out.b = detail::reduced_profile_bias(kind, out.rho, hp);
  out.value = reduced_objective(kind, out.rho, out.b, hp);
  return out;
}

}  // namespace nclab
