// Negative mining layered on ContrastBatch: class-prior debiasing and
// hardness weighting of the InfoNCE denominator, synthesis of hard
// negatives, and percentile-band filtering of negatives.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "gcl/contrast.hpp"
#include "gcl/objectives.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

enum class Miner { none, dcl, hbnm, hnm, cns };

Miner parse_miner(const std::string& name);
std::string miner_name(Miner m);

/// Mining knobs. tau_plus is the assumed class prior for the debiased
/// estimator, beta the hardness concentration; s synthetics per anchor are
/// mixed from the 2s hardest of each anchor's top-k negatives; l/u bound the
/// distance percentile band.
struct MinerSpec {
  Miner kind = Miner::none;
  double tau_plus = 0.1;
  double beta = 1.0;
  int s = 1;
  int k = 2;
  double l = 0.0;
  double u = 100.0;

  void validate() const;
};

/// InfoNCE with the negative mass corrected for an assumed class prior: per
/// anchor the mean over negatives of e^{theta/tau} is replaced by
/// g = max{(mean_neg - tau_plus * mean_pos) / (1 - tau_plus), e^{-1/tau}}
/// and each positive's denominator becomes e^{theta_p/tau} + Q * g, Q the
/// negative count. tau_plus = 0 recovers the plain loss.
Tensor debiased_infonce(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                        const Eigen::MatrixXd& neg, double tau,
                        double tau_plus);
Tensor debiased_infonce(Tape& t, const ContrastBatch& batch,
                        const Critic& critic, double tau, double tau_plus,
                        bool training);

/// Debiased InfoNCE whose negative mean is importance-weighted toward hard
/// negatives: weights proportional to e^{beta * theta / tau}, self-normalized
/// per anchor and computed on detached scores, so only the reweighted
/// exponentials carry gradient. beta = 0 equals debiased_infonce exactly.
Tensor hardness_infonce(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                        const Eigen::MatrixXd& neg, double tau,
                        double tau_plus, double beta);
Tensor hardness_infonce(Tape& t, const ContrastBatch& batch,
                        const Critic& critic, double tau, double tau_plus,
                        double beta, bool training);

/// Appends s synthetic negatives per anchor. Negatives are ranked by
/// detached inner-product similarity to the anchor, descending; with
/// h_1..h_2s the hardest 2s of the top k, the j-th synthetic is
/// alpha * anchor + (1 - alpha) * h_{s+j}, alpha ~ Uniform(0,1). Synthetic
/// rows join only their own anchor's negative set and never become anchors
/// or positives. Requires every anchor to have at least k >= 2s >= 2
/// negatives.
ContrastBatch hnm_augment(const ContrastBatch& batch, int s, int k,
                          RngStream& rng);
/// Deterministic variant taking the mixing coefficients directly,
/// anchor-major: alphas[i * s + j] drives anchor i's j-th synthetic.
ContrastBatch hnm_augment(const ContrastBatch& batch, int s, int k,
                          const std::vector<double>& alphas);

/// Restricts each anchor's negatives to a Euclidean-distance percentile
/// band: with negatives sorted by distance to the anchor, the one at
/// 1-based rank r of n survives iff l < 100 * r / n <= u (nearest-rank
/// convention). Throws if any anchor would keep nothing.
ContrastBatch cns_filter(const ContrastBatch& batch, double l, double u);

/// Similarity histogram for one anchor of a labeled embedding matrix: all
/// other rows are sorted by cosine similarity to the anchor, ascending, and
/// split into ten equal-count buckets; each bucket reports its size and the
/// fraction sharing the anchor's label.
struct DecileReport {
  std::array<int, 10> count{};
  std::array<double, 10> same_label_fraction{};
};

DecileReport similarity_decile_report(const Eigen::MatrixXd& embeddings,
                                      const std::vector<int>& labels,
                                      int anchor);

}  // namespace gcl
