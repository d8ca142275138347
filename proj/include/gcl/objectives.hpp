// Contrastive objectives. All functions return a scalar loss to be
// minimized. The negative-sample losses consume an anchor x candidate score
// (or embedding) layout with 0/1 positive and negative masks as produced by
// the pair samplers; the negative-free losses consume aligned embedding
// batches from two views.
#pragma once

#include <optional>
#include <string>

#include "gcl/graph.hpp"
#include "gcl/nn.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

enum class Objective {
  infonce,
  jsd,
  sp_jsd,
  triplet,
  bootstrap,
  barlow_twins,
  vicreg,
};

Objective parse_objective(const std::string& name);
std::string objective_name(Objective o);
/// True for losses that contrast against explicit negative samples.
bool needs_negatives(Objective o);

/// Validates an anchor x candidate mask pair against a score layout: shapes,
/// 0/1 entries, disjointness, and at least one positive and one negative per
/// anchor. `name` prefixes the error messages.
void check_contrast_masks(const std::string& name, int rows, int cols,
                          const Eigen::MatrixXd& pos,
                          const Eigen::MatrixXd& neg);

/// Weight matrix turning a masked elementwise sum into the mean over each
/// anchor's selected entries followed by the mean over anchors.
Eigen::MatrixXd anchor_mean_weights(const Eigen::MatrixXd& mask);

/// Per-anchor mean weights without the anchor average; each row sums to 1.
Eigen::MatrixXd row_mean_weights(const Eigen::MatrixXd& mask);

/// Where batch normalization is applied inside the bootstrapped objective's
/// networks.
struct BnFlags {
  bool encoder = true;
  bool projector = false;
  bool predictor = false;
};

struct ObjectiveSpec {
  Objective kind = Objective::infonce;
  double tau = 0.5;       // infonce temperature
  double epsilon = 1.0;   // triplet margin
  std::optional<double> lambda;  // barlow_twins / vicreg weight; unset = default
  double mu = 25.0;       // vicreg variance weight
  double gamma = 1.0;     // vicreg covariance weight
  double ema_decay = 0.99;
  BnFlags bn;

  void validate() const;
  /// Off-diagonal weight for barlow_twins: explicit value or 1/dim.
  double bt_lambda(int dim) const;
  /// Invariance weight for vicreg: explicit value or 25.
  double vicreg_lambda() const;
};

/// Projection head shared by anchors and candidates, followed by cosine
/// scoring. The MLP carries no bias terms, so it is positively homogeneous
/// and the cosine score is invariant to positive rescaling of an input row.
class Critic {
 public:
  Critic() = default;
  Critic(ParamStore& store, const std::string& prefix, int in_dim,
         int proj_dim, bool batchnorm, RngStream& rng);

  Tensor project(Tape& t, Tensor x, bool training) const;
  /// All-pairs cosine similarity between projected rows: A x C.
  Tensor scores(Tape& t, Tensor anchors, Tensor candidates,
                bool training) const;

 private:
  Mlp mlp_;
};

/// Temperature-scaled normalized contrastive loss. For each anchor the loss
/// averages, over its positives, -log of the softmax of the positive score
/// against that anchor's negatives (each positive sees only itself plus the
/// negatives in the denominator). Computed with log-sum-exp stabilization.
/// Every anchor must have at least one negative; otherwise this objective is
/// undefined and a negative-sample-free objective should be used instead.
Tensor infonce_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                    const Eigen::MatrixXd& neg, double tau);

/// Discriminator-based divergence loss. d = sigmoid(score), clipped to
/// [1e-12, 1 - 1e-12]; the loss averages -log d over positives and
/// -log(1 - d) over negatives, then over anchors.
Tensor jsd_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                const Eigen::MatrixXd& neg);

/// Softplus variant operating on raw (pre-sigmoid) scores:
/// mean over anchors of (1/P) sum sp(-score_pos) + (1/Q) sum sp(score_neg).
Tensor sp_jsd_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                   const Eigen::MatrixXd& neg);

/// Margin loss on raw embedding distances: per anchor,
/// max(mean_pos_dist - mean_neg_dist + epsilon, 0), averaged over anchors.
/// Operates on unprojected embeddings with Euclidean distance.
Tensor triplet_loss(Tape& t, Tensor anchors, Tensor candidates,
                    const Eigen::MatrixXd& pos, const Eigen::MatrixXd& neg,
                    double epsilon);

/// Redundancy-reduction loss. Columns of both batches are standardized, the
/// cross-view correlation matrix C = Z1^T Z2 / N is formed, and the loss is
/// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2. A zero-variance column
/// is an error.
Tensor barlow_twins_loss(Tape& t, Tensor z1, Tensor z2, double lambda);

/// Variance-invariance-covariance loss:
/// lambda * mean squared pairwise row distance
/// + mu * (v(Z1) + v(Z2)) with v = mean_d max(0, 1 - std_d)
/// + gamma * (c(Z1) + c(Z2)) with c = sum of squared off-diagonal
///   covariance entries / dim.
Tensor vicreg_loss(Tape& t, Tensor z1, Tensor z2, double lambda, double mu,
                   double gamma);

/// -mean_i cosine(pred_i, target_i) over aligned rows.
Tensor cosine_alignment_loss(Tape& t, Tensor pred, Tensor target);

/// Online and target networks for the bootstrapped objective. The online
/// store holds encoder, projector, and predictor; the target store mirrors
/// the full structure so value copies and EMA updates line up entry by
/// entry, but its predictor is never run.
struct BootstrapNets {
  EncoderSpec enc_spec;
  BnFlags bn;
  ParamStore online;
  ParamStore target;
  Encoder enc_online, enc_target;
  Mlp proj_online, proj_target;
  Mlp pred_online, pred_target;

  BootstrapNets(EncoderSpec spec, BnFlags flags, RngStream& rng);
};

/// Symmetrized bootstrap loss on aligned views: the online branch predicts
/// the target branch's projection of the other view, in both directions,
/// averaged. Target activations are detached, so no gradient reaches the
/// target parameters.
Tensor bootstrap_loss(Tape& t, BootstrapNets& nets, const Graph& view1,
                      const Graph& view2, bool training);

/// target <- ema_decay * target + (1 - ema_decay) * online, per entry.
/// Decay 0 makes the target an exact copy of the online network.
void bootstrap_target_update(BootstrapNets& nets, double ema_decay);

/// One full optimization step: forward, backward, AdamW update of the online
/// parameters, then the EMA target update. Returns the loss value.
double bl_step(BootstrapNets& nets, const Graph& view1, const Graph& view2,
               double ema_decay, AdamW& opt);

}  // namespace gcl
