#pragma once

#include "nclab/core.hpp"

#include <cmath>

/// The BCE bias fixed-point equation alpha(b) = 0, its unique-root solver,
/// and the uniform score-separation condition.
namespace nclab {

/// Inputs of the bias equation. n is real-valued: when auditing checkpoints
/// the per-class sample count is an effective quantity (batch size / K).
struct BiasProblem {
  double rho = 0.0;  // squared Frobenius norm of W
  int K = 2;
  double n = 1.0;
  double lambda_w = 0.0;
  double lambda_h = 0.0;
  double lambda_b = 0.0;

  static BiasProblem from_hyper(double rho, const HyperParams& hp) {
    return BiasProblem{rho, hp.K, static_cast<double>(hp.n),
                       hp.lambda_w, hp.lambda_h, hp.lambda_b};
  }

  double a() const { return std::sqrt(lambda_w / (n * lambda_h)); }

  void validate() const {
    if (!(rho >= 0)) fail("bias_problem", "rho must be >= 0");
    if (K < 2) fail("bias_problem", "K must be >= 2");
    if (!(n > 0) || !(lambda_w > 0) || !(lambda_h > 0) || !(lambda_b >= 0))
      fail("bias_problem", "invalid regularization parameters");
  }
};

/// alpha(b) = -(K-1)/(K(1+exp(b + a rho/(K(K-1))))) + 1/(K(1+exp(a rho/K - b)))
///          + lambda_b * b.
/// Zero exactly at the global minimizer's shared bias value.
inline double alpha_residual(double b, const BiasProblem& prob) {
  prob.validate();
  const double a = prob.a();
  const double K = prob.K;
  const double sneg = sigmoid(-(b + a * prob.rho / (K * (K - 1.0))));
  const double spos = sigmoid(b - a * prob.rho / K);
  return -(K - 1.0) / K * sneg + spos / K + prob.lambda_b * b;
}

/// Strictly increasing part of the split alpha = (beta1 - beta2)/K.
inline double bias_beta1(double b, const BiasProblem& prob) {
  return prob.lambda_b * prob.K * b + sigmoid(b - prob.a() * prob.rho / prob.K);
}

/// Strictly decreasing part.
inline double bias_beta2(double b, const BiasProblem& prob) {
  const double K = prob.K;
  return (K - 1.0) * sigmoid(-b - prob.a() * prob.rho / (K * (K - 1.0)));
}

/// Unique root of alpha_residual, found by bracket expansion then bisection
/// down to |alpha| < 1e-12. Uniqueness holds because alpha is strictly
/// increasing (beta1 up, beta2 down).
inline double solve_bias(const BiasProblem& prob) {
  prob.validate();
  const double tol = 1e-12;
  double B = prob.a() * prob.rho / prob.K + std::log(static_cast<double>(prob.K)) + 1.0;
  double lo = -B, hi = B;
  double flo = alpha_residual(lo, prob);
  double fhi = alpha_residual(hi, prob);
  int expansions = 0;
  while (flo > 0.0 || fhi < 0.0) {
    if (++expansions > 200) fail("solve_bias", "failed to bracket the root");
    B *= 2.0;
    lo = -B;
    hi = B;
    flo = alpha_residual(lo, prob);
    fhi = alpha_residual(hi, prob);
  }
  if (std::abs(flo) < tol) return lo;
  if (std::abs(fhi) < tol) return hi;
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = alpha_residual(mid, prob);
    if (!std::isfinite(fmid)) fail("solve_bias", "non-finite residual during bisection");
    if (std::abs(fmid) < tol) return mid;
    if (fmid < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  fail("solve_bias", "bisection did not reach the residual tolerance");
}

/// Sufficient condition for a single threshold separating all positive from
/// all negative decision scores; requires K > 2.
inline bool separation_holds(const BiasProblem& prob) {
  prob.validate();
  if (prob.K <= 2) return false;
  const double a = prob.a();
  const double K = prob.K;
  const double lhs = prob.lambda_b * a * prob.rho / (K - 1.0) + 0.5 / (K - 1.0);
  const double rhs = sigmoid(-a * prob.rho / (K - 1.0));
  return lhs > rhs;
}

}  // namespace nclab
