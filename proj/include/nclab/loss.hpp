#pragma once

#include "nclab/core.hpp"

#include <string>
#include <vector>

/// CE, BCE, and naive-BCE losses, the regularized objective, and exact
/// analytic gradients (per-score and full-parameter).
namespace nclab {

enum class LossKind { CE, BCE, NaiveBCE };

inline std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "CE";
    case LossKind::BCE: return "BCE";
    case LossKind::NaiveBCE: return "NaiveBCE";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "CE") return LossKind::CE;
  if (s == "BCE") return LossKind::BCE;
  if (s == "NaiveBCE") return LossKind::NaiveBCE;
  fail("loss_kind", "unknown loss kind '" + s + "' (expected CE, BCE, or NaiveBCE)");
}

inline void check_label(int label, Eigen::Index K) {
  if (label < 1 || label > K)
    fail("label", "class index " + std::to_string(label) + " outside [1, " +
                      std::to_string(K) + "]");
}

/// Per-sample loss of one score column. NaiveBCE treats the two classes
/// through the differenced score z_1 - z_2 with the positive sign on class 1.
inline double loss_value(LossKind kind, const Eigen::Ref<const Vector>& z, int label) {
  const Eigen::Index K = z.size();
  check_label(label, K);
  switch (kind) {
    case LossKind::CE: {
      const double m = z.maxCoeff();
      double sum = 0.0;
      for (Eigen::Index j = 0; j < K; ++j) sum += std::exp(z(j) - m);
      return m + std::log(sum) - z(label - 1);
    }
    case LossKind::BCE: {
      double v = softplus(-z(label - 1));
      for (Eigen::Index j = 0; j < K; ++j)
        if (j != label - 1) v += softplus(z(j));
      return v;
    }
    case LossKind::NaiveBCE: {
      if (K != 2) fail("loss_kind", "NaiveBCE requires K = 2");
      const double zd = z(0) - z(1);
      return label == 1 ? softplus(zd) : softplus(-zd);
    }
  }
  fail("loss_kind", "unreachable");
}

/// Column i holds dL/dz for sample i: softmax(z) - onehot for CE,
/// sigmoid(z) - onehot for BCE, and the differenced-score derivative for
/// NaiveBCE.
inline Matrix per_score_gradient(LossKind kind, const ScoreMatrix& Z, const Labels& labels) {
  const Eigen::Index K = Z.rows();
  const Eigen::Index N = Z.cols();
  if (static_cast<Eigen::Index>(labels.size()) != N)
    fail("shape", "labels length does not match score columns");
  if (kind == LossKind::NaiveBCE && K != 2) fail("loss_kind", "NaiveBCE requires K = 2");
  Matrix G(K, N);
  for (Eigen::Index c = 0; c < N; ++c) {
    const int label = labels[static_cast<std::size_t>(c)];
    check_label(label, K);
    switch (kind) {
      case LossKind::CE: {
        const double m = Z.col(c).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < K; ++j) {
          G(j, c) = std::exp(Z(j, c) - m);
          sum += G(j, c);
        }
        G.col(c) /= sum;
        G(label - 1, c) -= 1.0;
        break;
      }
      case LossKind::BCE: {
        for (Eigen::Index j = 0; j < K; ++j) G(j, c) = sigmoid(Z(j, c));
        G(label - 1, c) -= 1.0;
        break;
      }
      case LossKind::NaiveBCE: {
        const double zd = Z(0, c) - Z(1, c);
        const double g = label == 1 ? sigmoid(zd) : -sigmoid(-zd);
        G(0, c) = g;
        G(1, c) = -g;
        break;
      }
    }
  }
  return G;
}

/// Mean per-sample loss over the class-major columns plus the three coupled
/// weight-decay terms.
inline double objective(const ModelState& s, const HyperParams& hp, LossKind kind) {
  check_class_major(s, hp);
  const ScoreMatrix Z = decision_scores(s);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c)
    loss += loss_value(kind, Z.col(c), label_of_column(c, hp.n));
  loss /= static_cast<double>(hp.N());
  return loss + 0.5 * hp.lambda_w * s.W.squaredNorm() +
         0.5 * hp.lambda_h * s.H.squaredNorm() + 0.5 * hp.lambda_b * s.b.squaredNorm();
}

struct Gradient {
  Matrix dW;  // K x d
  Matrix dH;  // d x N
  Vector db;  // K
};

inline double grad_inf_norm(const Gradient& g) {
  double m = g.dW.cwiseAbs().maxCoeff();
  m = std::max(m, g.dH.cwiseAbs().maxCoeff());
  m = std::max(m, g.db.cwiseAbs().maxCoeff());
  return m;
}

/// Full-batch analytic gradient of the objective.
inline Gradient grad_objective(const ModelState& s, const HyperParams& hp, LossKind kind) {
  check_class_major(s, hp);
  const double N = static_cast<double>(hp.N());
  const ScoreMatrix Z = decision_scores(s);
  const Matrix G = per_score_gradient(kind, Z, class_major_labels(hp.K, hp.n));
  Gradient g;
  g.dW = (G * s.H.transpose()) / N + hp.lambda_w * s.W;
  g.dH = (s.W.transpose() * G) / N + hp.lambda_h * s.H;
  g.db = -G.rowwise().sum() / N + hp.lambda_b * s.b;
  return g;
}

/// Minibatch gradient: the loss term is averaged over the given columns only
/// (1/batch scaling) while the weight-decay terms stay global.
inline Gradient grad_objective_batch(const ModelState& s, const HyperParams& hp,
                                     LossKind kind, const std::vector<Eigen::Index>& cols) {
  check_class_major(s, hp);
  if (cols.empty()) fail("batch", "empty minibatch");
  const Eigen::Index B = static_cast<Eigen::Index>(cols.size());
  Matrix Hb(hp.d, B);
  Labels labels(cols.size());
  for (Eigen::Index i = 0; i < B; ++i) {
    Hb.col(i) = s.H.col(cols[static_cast<std::size_t>(i)]);
    labels[static_cast<std::size_t>(i)] = label_of_column(cols[static_cast<std::size_t>(i)], hp.n);
  }
  ScoreMatrix Zb = s.W * Hb;
  Zb.colwise() -= s.b;
  const Matrix Gb = per_score_gradient(kind, Zb, labels);
  const double Bd = static_cast<double>(B);
  Gradient g;
  g.dW = (Gb * Hb.transpose()) / Bd + hp.lambda_w * s.W;
  g.dH = hp.lambda_h * s.H;
  const Matrix dHb = (s.W.transpose() * Gb) / Bd;
  for (Eigen::Index i = 0; i < B; ++i) g.dH.col(cols[static_cast<std::size_t>(i)]) += dHb.col(i);
  g.db = -Gb.rowwise().sum() / Bd + hp.lambda_b * s.b;
  return g;
}

}  // namespace nclab
