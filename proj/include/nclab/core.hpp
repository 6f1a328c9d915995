#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

/// Core model types for the layer-peeled classification problem: the free
/// variables (W, H, b), problem dimensions, decision scores, and the
/// deterministic random initialization.
namespace nclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// K x N score matrix; entry (j, c) = w_j . h_c - b_j.
using ScoreMatrix = Eigen::MatrixXd;

/// 1-based class index per feature column.
using Labels = std::vector<int>;

/// All failures surface as Error with a short machine-readable code.
struct Error : std::runtime_error {
  Error(std::string code_, const std::string& msg)
      : std::runtime_error(code_ + ": " + msg), code(std::move(code_)) {}
  std::string code;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
  throw Error(code, msg);
}

/// Overflow-safe logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Overflow-safe log(1 + exp(x)).
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

struct HyperParams {
  int K = 2;             // class count
  int d = 1;             // feature dimension
  int n = 1;             // samples per class
  double lambda_w = 0;   // weight decay on W
  double lambda_h = 0;   // weight decay on H
  double lambda_b = 0;   // weight decay on b

  int N() const { return n * K; }
  bool etf_feasible() const { return d >= K - 1; }
  /// Feature/classifier coupling scale: the converged features satisfy
  /// h = a * w_class with a = sqrt(lambda_w / (n lambda_h)).
  double a() const { return std::sqrt(lambda_w / (n * lambda_h)); }

  void validate() const {
    if (K < 2) fail("hyperparams", "K must be >= 2, got " + std::to_string(K));
    if (d < 1) fail("hyperparams", "d must be >= 1, got " + std::to_string(d));
    if (n < 1) fail("hyperparams", "n must be >= 1, got " + std::to_string(n));
    if (!(lambda_w > 0)) fail("hyperparams", "lambda_w must be > 0");
    if (!(lambda_h > 0)) fail("hyperparams", "lambda_h must be > 0");
    if (!(lambda_b >= 0)) fail("hyperparams", "lambda_b must be >= 0");
  }
};

/// Free variables of the regularized objective. H is class-major: class k
/// (1-based) occupies columns [(k-1)*n, k*n).
struct ModelState {
  Matrix W;  // K x d
  Matrix H;  // d x N
  Vector b;  // K
};

struct InitConfig {
  std::uint64_t seed = 0;
  double bias_mean_offset = 0.0;  // added to every b_k after base init
};

inline int label_of_column(Eigen::Index c, int n) {
  return static_cast<int>(c / n) + 1;
}

inline Labels class_major_labels(int K, int n) {
  Labels labels(static_cast<std::size_t>(K) * n);
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(labels.size()); ++c)
    labels[static_cast<std::size_t>(c)] = label_of_column(c, n);
  return labels;
}

inline void check_dims(const ModelState& s) {
  if (s.W.rows() != s.b.size() || s.W.cols() != s.H.rows())
    fail("shape", "inconsistent state dimensions: W " + std::to_string(s.W.rows()) +
                      "x" + std::to_string(s.W.cols()) + ", H " + std::to_string(s.H.rows()) +
                      "x" + std::to_string(s.H.cols()) + ", b " + std::to_string(s.b.size()));
}

inline void check_class_major(const ModelState& s, const HyperParams& hp) {
  check_dims(s);
  if (s.W.rows() != hp.K || s.W.cols() != hp.d || s.H.cols() != hp.N())
    fail("shape", "state does not match hyperparameters");
}

/// Z = W*H - b*1^T.
inline ScoreMatrix decision_scores(const ModelState& s) {
  check_dims(s);
  ScoreMatrix z = s.W * s.H;
  z.colwise() -= s.b;
  return z;
}

/// Deterministic random source with fixed value mappings, so identical seeds
/// give bit-identical draws regardless of the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Uniform integer in [0, m).
  std::uint64_t below(std::uint64_t m) {
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(m)) % m;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// W, b uniform with kaiming-style bounds, H Gaussian with scale 1/sqrt(d).
/// The bias draws are recentered so mean(b) equals bias_mean_offset exactly
/// (up to rounding); under losses that conserve the bias mean this makes the
/// offset the conserved quantity itself. Draw order is fixed (W row-major,
/// then b, then H column-major) so a given (seed, hp, cfg) always yields a
/// bit-identical state.
inline ModelState init_state(const HyperParams& hp, const InitConfig& cfg) {
  hp.validate();
  Rng rng(cfg.seed);
  ModelState s;
  s.W.resize(hp.K, hp.d);
  s.H.resize(hp.d, hp.N());
  s.b.resize(hp.K);
  const double wb = std::sqrt(6.0 / hp.d);
  for (int k = 0; k < hp.K; ++k)
    for (int j = 0; j < hp.d; ++j) s.W(k, j) = rng.uniform(-wb, wb);
  const double bb = 1.0 / std::sqrt(static_cast<double>(hp.d));
  for (int k = 0; k < hp.K; ++k) s.b(k) = rng.uniform(-bb, bb);
  s.b.array() += cfg.bias_mean_offset - s.b.mean();
  const double hs = 1.0 / std::sqrt(static_cast<double>(hp.d));
  for (int c = 0; c < hp.N(); ++c)
    for (int j = 0; j < hp.d; ++j) s.H(j, c) = rng.normal() * hs;
  return s;
}

}  // namespace nclab
