#include "gcl/mining.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "gcl/error.hpp"

namespace gcl {

namespace {

std::string lowered(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(c));
  return out;
}

// Per-anchor convex weights over the negatives, proportional to
// e^{beta * theta / tau} on the detached score values. beta = 0 yields the
// uniform weights 1/Q exactly, matching row_mean_weights on the mask.
Eigen::MatrixXd hardness_weights(const Eigen::MatrixXd& theta,
                                 const Eigen::MatrixXd& neg, double tau,
                                 double beta) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
  for (int i = 0; i < theta.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < theta.cols(); ++j)
      if (neg(i, j) == 1.0) m = std::max(m, beta * theta(i, j) / tau);
    double sum = 0.0;
    for (int j = 0; j < theta.cols(); ++j)
      if (neg(i, j) == 1.0) {
        w(i, j) = std::exp(beta * theta(i, j) / tau - m);
        sum += w(i, j);
      }
    if (sum > 0.0) w.row(i) /= sum;
  }
  return w;
}

// Shared body of the mined losses. The per-row stabilizing shift is a
// constant that scales the exponentials, the estimate, and its floor alike,
// so it cancels exactly in both the value and the gradient. Entries outside
// the pos/neg support are zeroed before exp and pinned to 1 before log.
Tensor mined_infonce(Tape& t, const std::string& name, Tensor scores,
                     const Eigen::MatrixXd& pos, const Eigen::MatrixXd& neg,
                     double tau, double tau_plus, double beta) {
  if (!(tau > 0.0)) throw ConfigError(name + ": tau must be positive");
  if (!(tau_plus >= 0.0 && tau_plus < 1.0))
    throw ConfigError(name + ": tau_plus must lie in [0, 1)");
  if (!(beta >= 0.0)) throw ConfigError(name + ": beta must be non-negative");
  int a = scores.rows(), c = scores.cols();
  check_contrast_masks(name, a, c, pos, neg);

  Tensor s = t.mul_scalar(scores, 1.0 / tau);
  Eigen::MatrixXd support = pos + neg;
  Eigen::MatrixXd shift(a, c);
  const Eigen::MatrixXd& sv = s.val();
  for (int i = 0; i < a; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (support(i, j) == 1.0) m = std::max(m, sv(i, j));
    shift.row(i).setConstant(-m);
  }
  Tensor sup = t.constant(support);
  Tensor shifted = t.mul(t.add(s, t.constant(shift)), sup);
  Tensor e = t.exp(shifted);

  Tensor wneg = t.constant(hardness_weights(scores.val(), neg, tau, beta));
  Tensor mean_neg = t.row_sum(t.mul(e, wneg));                          // A x 1
  Tensor mean_pos = t.row_sum(t.mul(e, t.constant(row_mean_weights(pos))));
  Tensor est =
      t.mul_scalar(t.sub(mean_neg, t.mul_scalar(mean_pos, tau_plus)),
                   1.0 / (1.0 - tau_plus));
  // The floor e^{-1/tau}, carried into the shifted domain so the comparison
  // happens at the same scale as the estimate.
  Eigen::MatrixXd floor_col(a, 1);
  for (int i = 0; i < a; ++i)
    floor_col(i, 0) = std::exp(-1.0 / tau + shift(i, 0));
  // max(est, floor) as est + relu(floor - est); the floored branch is a
  // constant, so a clamped anchor contributes no gradient through g.
  Tensor g = t.add(est, t.relu(t.sub(t.constant(floor_col), est)));

  Eigen::MatrixXd qcol(a, 1);
  for (int i = 0; i < a; ++i) qcol(i, 0) = neg.row(i).sum();
  Tensor qg = t.mul(g, t.constant(qcol));  // A x 1

  Tensor denom = t.add(
      t.mul(e, sup),
      t.matmul(qg, t.constant(Eigen::MatrixXd::Ones(1, c))));
  Tensor denom_safe =
      t.add(t.mul(denom, sup),
            t.constant(Eigen::MatrixXd::Ones(a, c) - support));
  Tensor log_ratio = t.sub(shifted, t.log(denom_safe));
  Tensor w = t.constant(anchor_mean_weights(pos));
  return t.mul_scalar(t.sum_all(t.mul(log_ratio, w)), -1.0);
}

// Columns flagged as negatives for one anchor row.
std::vector<int> negative_columns(const Eigen::MatrixXd& neg, int row) {
  std::vector<int> out;
  for (int j = 0; j < neg.cols(); ++j)
    if (neg(row, j) == 1.0) out.push_back(j);
  return out;
}

void check_batch_geometry(const std::string& name, const ContrastBatch& b) {
  if (b.anchors.tape == nullptr || b.candidates.tape == nullptr ||
      b.anchors.tape != b.candidates.tape)
    throw ValidationError(name + ": batch tensors must share one tape");
  if (b.anchors.cols() != b.candidates.cols())
    throw ValidationError(name +
                          ": anchor and candidate dimensions differ");
  check_contrast_masks(name, b.anchors.rows(), b.candidates.rows(),
                       b.pos_mask, b.neg_mask);
}

}  // namespace

Miner parse_miner(const std::string& name) {
  std::string n = lowered(name);
  if (n == "none") return Miner::none;
  if (n == "dcl") return Miner::dcl;
  if (n == "hbnm") return Miner::hbnm;
  if (n == "hnm") return Miner::hnm;
  if (n == "cns") return Miner::cns;
  throw ConfigError("unknown miner '" + name +
                    "' (expected one of: none, DCL, HBNM, HNM, CNS)");
}

std::string miner_name(Miner m) {
  switch (m) {
    case Miner::none: return "none";
    case Miner::dcl: return "DCL";
    case Miner::hbnm: return "HBNM";
    case Miner::hnm: return "HNM";
    case Miner::cns: return "CNS";
  }
  throw ConfigError("unknown miner enum value");
}

void MinerSpec::validate() const {
  if (!(tau_plus >= 0.0 && tau_plus < 1.0))
    throw ConfigError("miner: tau_plus must lie in [0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("miner: beta must be non-negative");
  if (s < 1) throw ConfigError("miner: S must be at least 1");
  if (k < 2 * s)
    throw ConfigError("miner: K must be at least 2S (got S=" +
                      std::to_string(s) + ", K=" + std::to_string(k) + ")");
  if (!(l >= 0.0 && l < u && u <= 100.0))
    throw ConfigError("miner: percentiles must satisfy 0 <= l < u <= 100");
}

Tensor debiased_infonce(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                        const Eigen::MatrixXd& neg, double tau,
                        double tau_plus) {
  return mined_infonce(t, "debiased_infonce", scores, pos, neg, tau, tau_plus,
                       0.0);
}

Tensor debiased_infonce(Tape& t, const ContrastBatch& batch,
                        const Critic& critic, double tau, double tau_plus,
                        bool training) {
  check_batch_geometry("debiased_infonce", batch);
  Tensor th = critic.scores(t, batch.anchors, batch.candidates, training);
  return mined_infonce(t, "debiased_infonce", th, batch.pos_mask,
                       batch.neg_mask, tau, tau_plus, 0.0);
}

Tensor hardness_infonce(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                        const Eigen::MatrixXd& neg, double tau,
                        double tau_plus, double beta) {
  return mined_infonce(t, "hardness_infonce", scores, pos, neg, tau, tau_plus,
                       beta);
}

Tensor hardness_infonce(Tape& t, const ContrastBatch& batch,
                        const Critic& critic, double tau, double tau_plus,
                        double beta, bool training) {
  check_batch_geometry("hardness_infonce", batch);
  Tensor th = critic.scores(t, batch.anchors, batch.candidates, training);
  return mined_infonce(t, "hardness_infonce", th, batch.pos_mask,
                       batch.neg_mask, tau, tau_plus, beta);
}

ContrastBatch hnm_augment(const ContrastBatch& batch, int s, int k,
                          RngStream& rng) {
  if (s < 1) throw ConfigError("hnm: S must be at least 1");
  check_batch_geometry("hnm", batch);
  std::vector<double> alphas(static_cast<size_t>(batch.anchors.rows()) * s);
  for (double& a : alphas) a = rng.uniform();
  return hnm_augment(batch, s, k, alphas);
}

ContrastBatch hnm_augment(const ContrastBatch& batch, int s, int k,
                          const std::vector<double>& alphas) {
  if (s < 1) throw ConfigError("hnm: S must be at least 1");
  if (k < 2 * s)
    throw ConfigError("hnm: K must be at least 2S (got S=" +
                      std::to_string(s) + ", K=" + std::to_string(k) + ")");
  check_batch_geometry("hnm", batch);
  Tape& t = *batch.anchors.tape;
  int a = batch.anchors.rows(), c = batch.candidates.rows();
  if (static_cast<int>(alphas.size()) != a * s)
    throw ValidationError(
        "hnm: need one mixing coefficient per synthetic, anchors * S = " +
        std::to_string(a * s) + ", got " + std::to_string(alphas.size()));
  for (double al : alphas)
    if (!(al >= 0.0 && al <= 1.0))
      throw ValidationError("hnm: mixing coefficients must lie in [0, 1]");

  const Eigen::MatrixXd& av = batch.anchors.val();
  const Eigen::MatrixXd& cv = batch.candidates.val();
  std::vector<int> anchor_src(a * s), partner_src(a * s);
  Eigen::MatrixXd mix(a * s, 1), complement(a * s, 1);
  for (int i = 0; i < a; ++i) {
    std::vector<int> negs = negative_columns(batch.neg_mask, i);
    if (static_cast<int>(negs.size()) < k)
      throw ValidationError("hnm: anchor " + std::to_string(i) + " has " +
                            std::to_string(negs.size()) +
                            " negatives but K = " + std::to_string(k));
    // Hardness ranking on detached values; stable sort keeps ties in
    // candidate-index order.
    std::stable_sort(negs.begin(), negs.end(), [&](int x, int y) {
      return av.row(i).dot(cv.row(x)) > av.row(i).dot(cv.row(y));
    });
    for (int j = 0; j < s; ++j) {
      int row = i * s + j;
      anchor_src[row] = i;
      partner_src[row] = negs[s + j];  // second half of the 2s hardest
      mix(row, 0) = alphas[row];
      complement(row, 0) = 1.0 - alphas[row];
    }
  }
  Tensor synth =
      t.add(t.bcast_mul_col(t.gather_rows(batch.anchors, anchor_src),
                            t.constant(mix)),
            t.bcast_mul_col(t.gather_rows(batch.candidates, partner_src),
                            t.constant(complement)));

  ContrastBatch out;
  out.anchors = batch.anchors;
  out.candidates = t.concat_rows(batch.candidates, synth);
  out.pos_mask = Eigen::MatrixXd::Zero(a, c + a * s);
  out.pos_mask.leftCols(c) = batch.pos_mask;
  out.neg_mask = Eigen::MatrixXd::Zero(a, c + a * s);
  out.neg_mask.leftCols(c) = batch.neg_mask;
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < s; ++j) out.neg_mask(i, c + i * s + j) = 1.0;
  return out;
}

ContrastBatch cns_filter(const ContrastBatch& batch, double l, double u) {
  if (!(l >= 0.0 && l < u && u <= 100.0))
    throw ConfigError("cns: percentiles must satisfy 0 <= l < u <= 100");
  check_batch_geometry("cns", batch);
  int a = batch.anchors.rows(), c = batch.candidates.rows();
  const Eigen::MatrixXd& av = batch.anchors.val();
  const Eigen::MatrixXd& cv = batch.candidates.val();

  Eigen::MatrixXd kept = Eigen::MatrixXd::Zero(a, c);
  for (int i = 0; i < a; ++i) {
    std::vector<int> negs = negative_columns(batch.neg_mask, i);
    // Distance ranking on detached values; ties keep candidate-index order.
    std::stable_sort(negs.begin(), negs.end(), [&](int x, int y) {
      return (av.row(i) - cv.row(x)).norm() < (av.row(i) - cv.row(y)).norm();
    });
    int n = static_cast<int>(negs.size());
    int retained = 0;
    for (int r = 1; r <= n; ++r) {
      double pct = 100.0 * r / n;
      if (pct > l && pct <= u) {
        kept(i, negs[r - 1]) = 1.0;
        ++retained;
      }
    }
    if (retained == 0)
      throw ValidationError(
          "cns: anchor " + std::to_string(i) +
          " keeps no negatives in the percentile band (" + std::to_string(l) +
          ", " + std::to_string(u) + "]; widen the band");
  }

  ContrastBatch out;
  out.anchors = batch.anchors;
  out.candidates = batch.candidates;
  out.pos_mask = batch.pos_mask;
  out.neg_mask = kept;
  return out;
}

DecileReport similarity_decile_report(const Eigen::MatrixXd& embeddings,
                                      const std::vector<int>& labels,
                                      int anchor) {
  int n = static_cast<int>(embeddings.rows());
  if (static_cast<int>(labels.size()) != n)
    throw ValidationError("decile report: need one label per embedding row");
  if (anchor < 0 || anchor >= n)
    throw ValidationError("decile report: anchor row out of range");
  if (n < 2)
    throw ValidationError("decile report: need at least one candidate row");

  std::vector<int> idx;
  std::vector<double> sim(n, 0.0);
  double na = embeddings.row(anchor).norm();
  for (int j = 0; j < n; ++j) {
    if (j == anchor) continue;
    double scale = na * embeddings.row(j).norm();
    sim[j] = scale > 0.0 ? embeddings.row(anchor).dot(embeddings.row(j)) / scale
                         : 0.0;
    idx.push_back(j);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int x, int y) { return sim[x] < sim[y]; });

  DecileReport rep;
  int m = static_cast<int>(idx.size());
  for (int b = 0; b < 10; ++b) {
    int lo = b * m / 10, hi = (b + 1) * m / 10;
    rep.count[b] = hi - lo;
    int same = 0;
    for (int p = lo; p < hi; ++p)
      if (labels[idx[p]] == labels[anchor]) ++same;
    rep.same_label_fraction[b] =
        hi > lo ? static_cast<double>(same) / (hi - lo) : 0.0;
  }
  return rep;
}

}  // namespace gcl
