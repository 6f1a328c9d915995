#pragma once

#include "nclab/bias.hpp"
#include "nclab/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

/// Collapse and feature-quality metrics: NC1/NC2/NC3, classification and
/// uniform accuracy, compactness/distinctiveness, decision-score statistics.
namespace nclab {

struct ScoreStats {
  double pos_mean = 0.0;
  double pos_std = 0.0;
  double neg_mean = 0.0;
  double neg_std = 0.0;
};

struct MetricsReport {
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;
  double accuracy = 0.0;          // percent
  double uniform_accuracy = 0.0;  // percent
  double e_com = 0.0;             // percent
  double e_dis = 0.0;             // percent
  ScoreStats scores;
  double rho = 0.0;  // squared Frobenius norm of W
  double bias_mean = 0.0;
  double bias_std = 0.0;
  double alpha_at_bias = 0.0;  // bias-equation residual at bias_mean
};

struct NcValues {
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;
};

struct FeatureProps {
  double e_com = 0.0;
  double e_dis = 0.0;
  long excluded_pairs = 0;  // cosine pairs skipped due to zero norms
};

namespace detail {

inline void check_labels(const Labels& labels, Eigen::Index N, int K) {
  if (static_cast<Eigen::Index>(labels.size()) != N)
    fail("shape", "labels length does not match column count");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 1 || labels[i] > K)
      fail("label", "class index " + std::to_string(labels[i]) + " outside [1, " +
                        std::to_string(K) + "] at sample " + std::to_string(i));
}

inline std::vector<Eigen::Index> class_counts(const Labels& labels, int K) {
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l - 1)];
  return counts;
}

/// Column k = mean feature of class k+1 (columns of absent classes are zero).
inline Matrix class_means(const Matrix& H, const Labels& labels, int K,
                          const std::vector<Eigen::Index>& counts) {
  Matrix means = Matrix::Zero(H.rows(), K);
  for (Eigen::Index c = 0; c < H.cols(); ++c)
    means.col(labels[static_cast<std::size_t>(c)] - 1) += H.col(c);
  for (int k = 0; k < K; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0)
      means.col(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  return means;
}

/// Symmetric PSD pseudo-inverse; eigenvalues below 1e-10 * max are dropped.
inline Matrix psd_pinv(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  const Vector& vals = eig.eigenvalues();
  const double vmax = vals.maxCoeff();
  const double cutoff = 1e-10 * vmax;
  Matrix out = Matrix::Zero(S.rows(), S.cols());
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (vals(i) > cutoff && vals(i) > 0.0)
      out += eig.eigenvectors().col(i) * (1.0 / vals(i)) * eig.eigenvectors().col(i).transpose();
  return out;
}

/// Target frame (I - 11^T/K) / sqrt(K-1).
inline Matrix simplex_frame(int K) {
  return (Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K)) / std::sqrt(K - 1.0);
}

}  // namespace detail

/// NC1 = tr(Sigma_W pinv(Sigma_B)) / (#classes); NC2 and NC3 compare the
/// normalized classifier Gram and classifier-times-class-means against the
/// simplex frame. `centered` subtracts the classifier row mean first; pass
/// false to compare the raw Gram instead.
inline NcValues nc_metrics(const Matrix& W, const Matrix& H, const Labels& labels,
                           bool centered = true) {
  const int K = static_cast<int>(W.rows());
  if (W.cols() != H.rows()) fail("shape", "W and H dimensions disagree");
  detail::check_labels(labels, H.cols(), K);
  const auto counts = detail::class_counts(labels, K);
  const int present =
      static_cast<int>(std::count_if(counts.begin(), counts.end(), [](Eigen::Index c) { return c > 0; }));
  if (present < 2) fail("single_class", "nc metrics need at least 2 classes present");
  const double N = static_cast<double>(H.cols());
  const Matrix means = detail::class_means(H, labels, K, counts);
  const Vector gmean = H.rowwise().mean();

  // NC1: within- vs between-class scatter.
  Matrix Hc = H;
  for (Eigen::Index c = 0; c < H.cols(); ++c)
    Hc.col(c) -= means.col(labels[static_cast<std::size_t>(c)] - 1);
  const Matrix sigma_w = Hc * Hc.transpose() / N;
  Matrix sigma_b = Matrix::Zero(H.rows(), H.rows());
  for (int k = 0; k < K; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0) {
      const Vector dk = means.col(k) - gmean;
      sigma_b += dk * dk.transpose();
    }
  sigma_b /= static_cast<double>(present);

  NcValues out;
  if (sigma_b.cwiseAbs().maxCoeff() == 0.0) {
    out.nc1 = sigma_w.cwiseAbs().maxCoeff() == 0.0
                  ? 0.0
                  : std::numeric_limits<double>::infinity();
  } else {
    out.nc1 = sigma_w.cwiseProduct(detail::psd_pinv(sigma_b)).sum() / present;
  }

  // NC2: classifier Gram vs frame.
  Matrix Wt = W;
  if (centered) Wt.rowwise() -= W.colwise().mean();
  const Matrix gram = Wt * Wt.transpose();
  const double gnorm = gram.norm();
  if (gnorm == 0.0) fail("degenerate", "zero classifier Gram in NC2");
  const Matrix frame = detail::simplex_frame(K);
  out.nc2 = (gram / gnorm - frame).norm();

  // NC3: classifier-feature alignment vs frame (needs every class present).
  if (present != K) fail("class_missing", "NC3 needs every class present");
  Matrix Mt = means;
  Mt.colwise() -= Vector(means.rowwise().mean());
  const Matrix align = Wt * Mt;
  const double anorm = align.norm();
  if (anorm == 0.0) fail("degenerate", "zero alignment matrix in NC3");
  out.nc3 = (align / anorm - frame).norm();
  return out;
}

/// Percent of columns whose label row attains the maximum, ties broken
/// toward the smallest class index (a tie won by a smaller non-label index
/// counts as incorrect).
inline double accuracy(const ScoreMatrix& Z, const Labels& labels) {
  detail::check_labels(labels, Z.cols(), static_cast<int>(Z.rows()));
  Eigen::Index correct = 0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < Z.rows(); ++j)
      if (Z(j, c) > Z(best, c)) best = j;
    if (best + 1 == labels[static_cast<std::size_t>(c)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(Z.cols());
}

/// Best single-threshold accuracy: a sample counts when z_label > t and
/// t >= every other entry. Thresholds are evenly spaced (inclusive) over
/// [min positive score, max negative score]; if the sets already separate,
/// the answer is 100.
inline double uniform_accuracy(const ScoreMatrix& Z, const Labels& labels,
                               int n_thresholds = 200) {
  detail::check_labels(labels, Z.cols(), static_cast<int>(Z.rows()));
  if (n_thresholds < 1) fail("uniform_accuracy", "n_thresholds must be >= 1");
  const Eigen::Index N = Z.cols();
  Vector zpos(N), znegmax(N);
  for (Eigen::Index c = 0; c < N; ++c) {
    const Eigen::Index l = labels[static_cast<std::size_t>(c)] - 1;
    zpos(c) = Z(l, c);
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < Z.rows(); ++j)
      if (j != l) m = std::max(m, Z(j, c));
    znegmax(c) = m;
  }
  const double pos_min = zpos.minCoeff();
  const double neg_max = znegmax.maxCoeff();
  if (pos_min >= neg_max) return 100.0;
  Eigen::Index best = 0;
  for (int m = 0; m < n_thresholds; ++m) {
    const double t = n_thresholds == 1
                         ? pos_min
                         : pos_min + (neg_max - pos_min) * m / (n_thresholds - 1.0);
    Eigen::Index count = 0;
    for (Eigen::Index c = 0; c < N; ++c)
      if (zpos(c) > t && t >= znegmax(c)) ++count;
    best = std::max(best, count);
  }
  return 100.0 * static_cast<double>(best) / static_cast<double>(N);
}

/// E_com: mean within-class pairwise cosine of globally centered features
/// (self-pairs included), mapped to [0, 100]. E_dis: one minus the mean
/// cross-class pairwise cosine of raw features, mapped likewise. Zero-norm
/// vectors drop the pairs they touch.
inline FeatureProps feature_properties(const Matrix& H, const Labels& labels) {
  int K = 0;
  for (int l : labels) K = std::max(K, l);
  if (K < 1) fail("label", "empty label set");
  detail::check_labels(labels, H.cols(), K);
  const auto counts = detail::class_counts(labels, K);
  const int present =
      static_cast<int>(std::count_if(counts.begin(), counts.end(), [](Eigen::Index c) { return c > 0; }));
  if (present < 2) fail("single_class", "feature properties need at least 2 classes");

  FeatureProps out;
  const Vector gmean = H.rowwise().mean();

  // Compactness over centered, normalized features: the double cosine sum of
  // class k equals |sum of unit vectors|^2.
  Matrix usum = Matrix::Zero(H.rows(), K);
  std::vector<Eigen::Index> uvalid(static_cast<std::size_t>(K), 0);
  for (Eigen::Index c = 0; c < H.cols(); ++c) {
    Vector v = H.col(c) - gmean;
    const double nv = v.norm();
    const int k = labels[static_cast<std::size_t>(c)] - 1;
    if (nv == 0.0) continue;
    usum.col(k) += v / nv;
    ++uvalid[static_cast<std::size_t>(k)];
  }
  double com_sum = 0.0;
  int com_classes = 0;
  for (int k = 0; k < K; ++k) {
    const Eigen::Index nk = counts[static_cast<std::size_t>(k)];
    const Eigen::Index mk = uvalid[static_cast<std::size_t>(k)];
    if (nk == 0) continue;
    out.excluded_pairs += nk * nk - mk * mk;
    if (mk == 0) continue;
    com_sum += usum.col(k).squaredNorm() / static_cast<double>(mk * mk);
    ++com_classes;
  }
  if (com_classes == 0) fail("degenerate", "all compactness pairs excluded");
  out.e_com = 0.5 * (com_sum / com_classes + 1.0) * 100.0;

  // Distinctiveness over raw normalized features.
  Matrix vsum = Matrix::Zero(H.rows(), K);
  std::vector<Eigen::Index> vvalid(static_cast<std::size_t>(K), 0);
  for (Eigen::Index c = 0; c < H.cols(); ++c) {
    const double nv = H.col(c).norm();
    const int k = labels[static_cast<std::size_t>(c)] - 1;
    if (nv == 0.0) continue;
    vsum.col(k) += H.col(c) / nv;
    ++vvalid[static_cast<std::size_t>(k)];
  }
  double dis_sum = 0.0;
  long dis_pairs = 0;
  for (int k = 0; k < K; ++k)
    for (int k2 = 0; k2 < K; ++k2) {
      if (k == k2 || counts[static_cast<std::size_t>(k)] == 0 ||
          counts[static_cast<std::size_t>(k2)] == 0)
        continue;
      const Eigen::Index rk = vvalid[static_cast<std::size_t>(k)];
      const Eigen::Index rk2 = vvalid[static_cast<std::size_t>(k2)];
      out.excluded_pairs += counts[static_cast<std::size_t>(k)] * counts[static_cast<std::size_t>(k2)] - rk * rk2;
      if (rk == 0 || rk2 == 0) continue;
      dis_sum += vsum.col(k).dot(vsum.col(k2)) / static_cast<double>(rk * rk2);
      ++dis_pairs;
    }
  if (dis_pairs == 0) fail("degenerate", "all distinctiveness pairs excluded");
  out.e_dis = 0.5 * (1.0 - dis_sum / static_cast<double>(dis_pairs)) * 100.0;
  return out;
}

/// Population moments of the bias-free positive scores {z_label} and
/// negative scores {z_j, j != label}.
inline ScoreStats score_stats(const ScoreMatrix& Z_nobias, const Labels& labels) {
  detail::check_labels(labels, Z_nobias.cols(), static_cast<int>(Z_nobias.rows()));
  double ps = 0.0, ps2 = 0.0, ns = 0.0, ns2 = 0.0;
  Eigen::Index np = 0, nn = 0;
  for (Eigen::Index c = 0; c < Z_nobias.cols(); ++c) {
    const Eigen::Index l = labels[static_cast<std::size_t>(c)] - 1;
    for (Eigen::Index j = 0; j < Z_nobias.rows(); ++j) {
      const double z = Z_nobias(j, c);
      if (j == l) {
        ps += z;
        ps2 += z * z;
        ++np;
      } else {
        ns += z;
        ns2 += z * z;
        ++nn;
      }
    }
  }
  ScoreStats out;
  if (np > 0) {
    out.pos_mean = ps / np;
    out.pos_std = std::sqrt(std::max(0.0, ps2 / np - out.pos_mean * out.pos_mean));
  }
  if (nn > 0) {
    out.neg_mean = ns / nn;
    out.neg_std = std::sqrt(std::max(0.0, ns2 / nn - out.neg_mean * out.neg_mean));
  }
  return out;
}

/// True when the argmax-score prediction and the nearest-class-mean
/// prediction agree on every sample (both with smallest-index tie-break).
inline bool nc4_agrees(const Matrix& W, const Matrix& H, const Vector& b, const Labels& labels) {
  const int K = static_cast<int>(W.rows());
  detail::check_labels(labels, H.cols(), K);
  const auto counts = detail::class_counts(labels, K);
  for (int k = 0; k < K; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0)
      fail("class_missing", "nearest-mean check needs every class present");
  const Matrix means = detail::class_means(H, labels, K, counts);
  for (Eigen::Index c = 0; c < H.cols(); ++c) {
    Eigen::Index best_score = 0;
    double bs = W.row(0).dot(H.col(c)) - b(0);
    for (int j = 1; j < K; ++j) {
      const double s = W.row(j).dot(H.col(c)) - b(j);
      if (s > bs) {
        bs = s;
        best_score = j;
      }
    }
    Eigen::Index best_mean = 0;
    double bd = (H.col(c) - means.col(0)).squaredNorm();
    for (int j = 1; j < K; ++j) {
      const double dist = (H.col(c) - means.col(j)).squaredNorm();
      if (dist < bd) {
        bd = dist;
        best_mean = j;
      }
    }
    if (best_score != best_mean) return false;
  }
  return true;
}

/// Assembles every metric for one (W, H, b) triple. n_for_alpha is the
/// effective per-class sample count entering the bias-equation diagnostic;
/// pass hp.n for in-model states.
inline MetricsReport full_report(const Matrix& W, const Matrix& H, const Vector& b,
                                 const Labels& labels, const HyperParams& hp,
                                 double n_for_alpha, bool centered = true,
                                 int n_thresholds = 200) {
  MetricsReport r;
  const NcValues nc = nc_metrics(W, H, labels, centered);
  r.nc1 = nc.nc1;
  r.nc2 = nc.nc2;
  r.nc3 = nc.nc3;
  ScoreMatrix Z = W * H;
  const ScoreMatrix Z0 = Z;
  Z.colwise() -= b;
  r.accuracy = accuracy(Z, labels);
  r.uniform_accuracy = uniform_accuracy(Z, labels, n_thresholds);
  const FeatureProps fp = feature_properties(H, labels);
  r.e_com = fp.e_com;
  r.e_dis = fp.e_dis;
  r.scores = score_stats(Z0, labels);
  r.rho = W.squaredNorm();
  r.bias_mean = b.mean();
  r.bias_std = std::sqrt(std::max(0.0, b.squaredNorm() / b.size() - r.bias_mean * r.bias_mean));
  BiasProblem prob = BiasProblem::from_hyper(r.rho, hp);
  prob.n = n_for_alpha;
  r.alpha_at_bias = alpha_residual(r.bias_mean, prob);
  return r;
}

inline MetricsReport full_report(const ModelState& s, const HyperParams& hp,
                                 bool centered = true, int n_thresholds = 200) {
  check_class_major(s, hp);
  return full_report(s.W, s.H, s.b, class_major_labels(hp.K, hp.n), hp,
                     static_cast<double>(hp.n), centered, n_thresholds);
}

}  // namespace nclab
