#pragma once

// Training objectives: language cross-entropy, feature-reconstruction loss,
// token subset sampling, and the per-batch totals.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uvt/common.hpp"
#include "uvt/tokenizer.hpp"

namespace uvt {

struct LossWeights {
  double lambda = 2.0;  // reconstruction weight
  double mu = 0.2;      // smooth-L1 weight inside the reconstruction loss
};

struct LossBreakdown {
  double l_lan = 0.0;
  double l_vis = 0.0;
  double total = 0.0;
  int n_lan = 0;  // samples contributing to l_lan
  int n_vis = 0;  // samples contributing to l_vis
};

// ---------------------------------------------------------------------------
// Language cross-entropy
// ---------------------------------------------------------------------------

// Mean negative log-likelihood over masked positions. If dlogits is non-null
// it receives d(loss)/d(logits) (zero on unmasked rows). Throws when no
// position is masked in.
template <class S>
double language_loss(const Mat<S>& logits, const TokenSequence& targets,
                     const std::vector<bool>& mask, Mat<S>* dlogits = nullptr) {
  const Eigen::Index t = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != t || static_cast<Eigen::Index>(mask.size()) != t)
    throw std::invalid_argument("language_loss: shape mismatch");
  int n_masked = 0;
  for (bool b : mask) n_masked += b ? 1 : 0;
  if (n_masked == 0) throw std::invalid_argument("language_loss: mask selects no positions");

  if (dlogits) dlogits->setZero(t, logits.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < t; ++r) {
    if (!mask[r]) continue;
    int y = targets[r];
    if (y < 0 || y >= logits.cols()) throw std::out_of_range("language_loss: target id out of range");
    S mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index v = 0; v < logits.cols(); ++v) sum += std::exp(static_cast<double>(logits(r, v) - mx));
    double lse = static_cast<double>(mx) + std::log(sum);
    loss += lse - static_cast<double>(logits(r, y));
    if (dlogits) {
      for (Eigen::Index v = 0; v < logits.cols(); ++v)
        (*dlogits)(r, v) = static_cast<S>(std::exp(static_cast<double>(logits(r, v)) - lse) / n_masked);
      (*dlogits)(r, y) -= S(1.0 / n_masked);
    }
  }
  return loss / n_masked;
}

// ---------------------------------------------------------------------------
// Reconstruction components
// ---------------------------------------------------------------------------

constexpr double kNormEps = 1e-8;

// 1 - <a,b>/(|a||b|), in [0, 2]. Optional gradient w.r.t. a.
template <class S>
double cosine_distance(const Mat<S>& a, const Mat<S>& b, Mat<S>* da = nullptr) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw std::invalid_argument("cosine_distance: expected matching row vectors");
  double na = a.template cast<double>().norm();
  double nb = b.template cast<double>().norm();
  if (na <= kNormEps || nb <= kNormEps)
    throw std::domain_error("cosine_distance: vector norm below epsilon");
  double dot = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) dot += static_cast<double>(a(0, i)) * b(0, i);
  double sim = dot / (na * nb);
  if (da) {
    da->resize(1, a.cols());
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      double g = static_cast<double>(b(0, i)) / (na * nb) - sim * a(0, i) / (na * na);
      (*da)(0, i) = static_cast<S>(-g);
    }
  }
  return 1.0 - sim;
}

// Mean over dims of the standard beta=1 smooth L1. Optional gradient w.r.t. a.
template <class S>
double smooth_l1(const Mat<S>& a, const Mat<S>& b, Mat<S>* da = nullptr) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw std::invalid_argument("smooth_l1: expected matching row vectors");
  const Eigen::Index d = a.cols();
  if (da) da->setZero(1, d);
  double loss = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double e = static_cast<double>(a(0, i)) - b(0, i);
    if (std::abs(e) < 1.0) {
      loss += 0.5 * e * e;
      if (da) (*da)(0, i) = static_cast<S>(e / d);
    } else {
      loss += std::abs(e) - 0.5;
      if (da) (*da)(0, i) = static_cast<S>((e > 0 ? 1.0 : -1.0) / d);
    }
  }
  return loss / d;
}

// ---------------------------------------------------------------------------
// Token subset sampling
// ---------------------------------------------------------------------------

// ceil(fraction * n) distinct indices, uniform without replacement, sorted.
inline std::vector<int> sample_subset_C(int n_tokens, double fraction, Rng& rng) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("sample_subset_C: fraction must be in (0, 1]");
  int k = static_cast<int>(std::ceil(fraction * n_tokens));
  auto idx = sample_without_replacement(n_tokens, k, rng);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Exactly n_lowres distinct indices into the high-resolution spatial tokens.
inline std::vector<int> sample_highres_tokens(int n_highres, int n_lowres, Rng& rng) {
  if (n_lowres > n_highres)
    throw std::invalid_argument("sample_highres_tokens: n_lowres exceeds n_highres");
  auto idx = sample_without_replacement(n_highres, n_lowres, rng);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Vision loss
// ---------------------------------------------------------------------------

// Mean over rows of cosine_distance + mu * smooth_l1. Optional gradient
// w.r.t. the student rows.
template <class S>
double vision_loss(const Mat<S>& student, const Mat<S>& teacher, double mu,
                   Mat<S>* dstudent = nullptr) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw std::invalid_argument("vision_loss: shape mismatch");
  const Eigen::Index rows = student.rows();
  if (rows < 1) throw std::invalid_argument("vision_loss: empty feature set");
  if (dstudent) dstudent->setZero(rows, student.cols());

  double loss = 0;
  Mat<S> dcos, dl1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    Mat<S> srow = student.row(r);
    Mat<S> trow = teacher.row(r);
    loss += cosine_distance<S>(srow, trow, dstudent ? &dcos : nullptr);
    loss += mu * smooth_l1<S>(srow, trow, dstudent ? &dl1 : nullptr);
    if (dstudent) dstudent->row(r) = (dcos + S(mu) * dl1) / S(rows);
  }
  return loss / rows;
}

// ---------------------------------------------------------------------------
// Batch total
// ---------------------------------------------------------------------------

struct SampleLoss {
  double l_lan = 0.0;
  double l_vis = 0.0;
  bool has_vis = false;
};

// total = mean(l_lan) + lambda * mean(l_vis over flagged samples); the vision
// term vanishes when no sample in the batch is flagged.
inline LossBreakdown total_loss(const std::vector<SampleLoss>& batch, double lambda) {
  LossBreakdown out;
  for (const auto& s : batch) {
    out.l_lan += s.l_lan;
    out.n_lan += 1;
    if (s.has_vis) {
      out.l_vis += s.l_vis;
      out.n_vis += 1;
    }
  }
  if (out.n_lan > 0) out.l_lan /= out.n_lan;
  if (out.n_vis > 0) out.l_vis /= out.n_vis;
  out.total = out.l_lan + (out.n_vis > 0 ? lambda * out.l_vis : 0.0);
  return out;
}

}  // namespace uvt
