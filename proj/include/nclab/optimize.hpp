#pragma once

#include "nclab/core.hpp"
#include "nclab/loss.hpp"
#include "nclab/metrics.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

/// Deterministic first-order training of the free-variable model: plain and
/// heavy-ball gradient descent plus an adaptive-moments method, constant /
/// step / cosine schedules, full-batch or seeded minibatch.
namespace nclab {

enum class Method { GD, GDMomentum, AdaptiveMoments };

enum class ScheduleKind { Constant, Step, Cosine };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  long period = 1;      // Step: steps between decays
  double gamma = 0.1;   // Step: decay factor
  long total = 1;       // Cosine: steps from lr0 down to lr_min
  double lr_min = 0.0;  // Cosine: floor
};

inline double lr_at(const Schedule& s, double lr0, long t) {
  if (t < 0) fail("schedule", "negative step index");
  switch (s.kind) {
    case ScheduleKind::Constant:
      return lr0;
    case ScheduleKind::Step:
      if (s.period < 1) fail("schedule", "step period must be >= 1");
      return lr0 * std::pow(s.gamma, static_cast<double>(t / s.period));
    case ScheduleKind::Cosine:
      if (s.total < 1) fail("schedule", "cosine total must be >= 1");
      if (t >= s.total) return s.lr_min;
      return s.lr_min + (lr0 - s.lr_min) *
                            (1.0 + std::cos(3.14159265358979323846 * t / s.total)) / 2.0;
  }
  fail("schedule", "unreachable");
}

struct TrainConfig {
  Method method = Method::GD;
  double beta = 0.9;    // GDMomentum
  double beta1 = 0.9;   // AdaptiveMoments
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr0 = 0.5;
  Schedule schedule;
  long steps = 0;
  std::optional<long> batch_size;  // absent = full batch
  double grad_tol = 1e-8;          // early stop on full-gradient inf norm
  std::uint64_t seed = 0;          // minibatch sampling
  long record_every = 1;

  void validate(int N) const {
    if (!(lr0 > 0)) fail("train_config", "lr0 must be > 0");
    if (steps < 0) fail("train_config", "steps must be >= 0");
    if (record_every < 1) fail("train_config", "record_every must be >= 1");
    if (!(grad_tol >= 0)) fail("train_config", "grad_tol must be >= 0");
    if (batch_size && (*batch_size < 1 || *batch_size > N))
      fail("train_config", "batch_size must lie in [1, N]");
    if (method == Method::GDMomentum && !(beta >= 0 && beta < 1))
      fail("train_config", "momentum beta must lie in [0, 1)");
    if (method == Method::AdaptiveMoments &&
        !(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
      fail("train_config", "adaptive-moments parameters out of range");
  }
};

struct TrajectoryRecord {
  long step = 0;
  double objective = 0.0;
  double grad_inf_norm = 0.0;
  std::optional<MetricsReport> metrics;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  ModelState final_state;
  bool converged = false;  // full gradient dropped below grad_tol
  bool diverged = false;   // non-finite objective encountered
  long steps_taken = 0;
};

/// Called at recorded steps; return a report to attach it to the record.
using MetricsHook = std::function<std::optional<MetricsReport>(const ModelState&, long)>;

namespace detail {

inline std::vector<Eigen::Index> sample_columns(Rng& rng, Eigen::Index N, Eigen::Index B) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(B));
  return idx;
}

struct MomentBuffers {
  Matrix mW, vW, mH, vH;
  Vector mb, vb;
  void init(const ModelState& s) {
    mW = Matrix::Zero(s.W.rows(), s.W.cols());
    vW = mW;
    mH = Matrix::Zero(s.H.rows(), s.H.cols());
    vH = mH;
    mb = Vector::Zero(s.b.size());
    vb = mb;
  }
};

}  // namespace detail

/// Runs the configured method from state0 and records (step, objective,
/// full-gradient inf-norm, optional metrics) every record_every steps and at
/// the final step. Early-stops when the full gradient falls below grad_tol
/// (checked at recorded steps when minibatching); aborts with diverged=true
/// on a non-finite objective.
inline Trajectory train(const ModelState& state0, const HyperParams& hp, LossKind kind,
                        const TrainConfig& cfg, const MetricsHook& hook = {}) {
  hp.validate();
  check_class_major(state0, hp);
  cfg.validate(hp.N());
  const Eigen::Index N = hp.N();
  const bool full_batch = !cfg.batch_size || *cfg.batch_size == N;

  Trajectory traj;
  ModelState x = state0;
  detail::MomentBuffers buf;
  if (cfg.method != Method::GD) buf.init(x);
  Rng rng(cfg.seed);
  long adam_t = 0;

  for (long t = 0;; ++t) {
    const bool last = t == cfg.steps;
    const bool at_record = t % cfg.record_every == 0 || last;
    double obj = 0.0, gnorm = 0.0;
    Gradient g;
    bool have_full = false;
    if (full_batch || at_record) {
      obj = objective(x, hp, kind);
      if (!std::isfinite(obj)) {
        traj.records.push_back({t, obj, std::numeric_limits<double>::quiet_NaN(), std::nullopt});
        traj.diverged = true;
        traj.steps_taken = t;
        break;
      }
      g = grad_objective(x, hp, kind);
      gnorm = grad_inf_norm(g);
      have_full = true;
    }
    const bool converged_now = have_full && gnorm < cfg.grad_tol;
    if (at_record || converged_now)
      traj.records.push_back(
          {t, obj, gnorm, hook ? hook(x, t) : std::optional<MetricsReport>{}});
    if (converged_now) {
      traj.converged = true;
      traj.steps_taken = t;
      break;
    }
    if (last) {
      traj.steps_taken = t;
      break;
    }

    Gradient gu = full_batch
                      ? std::move(g)
                      : grad_objective_batch(x, hp, kind,
                                             detail::sample_columns(rng, N, *cfg.batch_size));
    const double lr = lr_at(cfg.schedule, cfg.lr0, t);
    switch (cfg.method) {
      case Method::GD:
        x.W -= lr * gu.dW;
        x.H -= lr * gu.dH;
        x.b -= lr * gu.db;
        break;
      case Method::GDMomentum:
        buf.mW = cfg.beta * buf.mW + gu.dW;
        buf.mH = cfg.beta * buf.mH + gu.dH;
        buf.mb = cfg.beta * buf.mb + gu.db;
        x.W -= lr * buf.mW;
        x.H -= lr * buf.mH;
        x.b -= lr * buf.mb;
        break;
      case Method::AdaptiveMoments: {
        ++adam_t;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
        buf.mW = cfg.beta1 * buf.mW + (1.0 - cfg.beta1) * gu.dW;
        buf.vW = cfg.beta2 * buf.vW + (1.0 - cfg.beta2) * gu.dW.cwiseProduct(gu.dW);
        buf.mH = cfg.beta1 * buf.mH + (1.0 - cfg.beta1) * gu.dH;
        buf.vH = cfg.beta2 * buf.vH + (1.0 - cfg.beta2) * gu.dH.cwiseProduct(gu.dH);
        buf.mb = cfg.beta1 * buf.mb + (1.0 - cfg.beta1) * gu.db;
        buf.vb = cfg.beta2 * buf.vb + (1.0 - cfg.beta2) * gu.db.cwiseProduct(gu.db);
        x.W.array() -=
            lr * (buf.mW.array() / c1) / ((buf.vW.array() / c2).sqrt() + cfg.eps);
        x.H.array() -=
            lr * (buf.mH.array() / c1) / ((buf.vH.array() / c2).sqrt() + cfg.eps);
        x.b.array() -=
            lr * (buf.mb.array() / c1) / ((buf.vb.array() / c2).sqrt() + cfg.eps);
        break;
      }
    }
  }
  traj.final_state = std::move(x);
  return traj;
}

}  // namespace nclab
