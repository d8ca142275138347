#include "gcl/objectives.hpp"

#include <cmath>

#include "gcl/error.hpp"

namespace gcl {

// `rows`/`cols` is the anchor x candidate layout of the score or distance
// matrix the masks must match.
void check_contrast_masks(const std::string& name, int rows, int cols,
                          const Eigen::MatrixXd& pos,
                          const Eigen::MatrixXd& neg) {
  if (pos.rows() != rows || pos.cols() != cols || neg.rows() != rows ||
      neg.cols() != cols)
    throw ValidationError(name + ": mask shapes must match the score layout");
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double p = pos(i, j), q = neg(i, j);
      if ((p != 0.0 && p != 1.0) || (q != 0.0 && q != 1.0))
        throw ValidationError(name + ": masks must be 0/1");
      if (p == 1.0 && q == 1.0)
        throw ValidationError(name +
                              ": overlapping positive and negative masks");
    }
  for (int i = 0; i < rows; ++i) {
    if (pos.row(i).sum() == 0.0)
      throw ValidationError(name + ": anchor " + std::to_string(i) +
                            " has no positive");
    if (neg.row(i).sum() == 0.0) {
      if (name.find("infonce") != std::string::npos)
        throw ValidationError(
            "infonce: anchor " + std::to_string(i) +
            " has no negatives; this objective is undefined without negative "
            "samples, use a negative-sample-free objective (bootstrap, "
            "barlow_twins, vicreg) instead");
      throw ValidationError(name + ": anchor " + std::to_string(i) +
                            " has no negative");
    }
  }
}

Eigen::MatrixXd anchor_mean_weights(const Eigen::MatrixXd& mask) {
  Eigen::MatrixXd w = mask;
  double a = static_cast<double>(mask.rows());
  for (int i = 0; i < w.rows(); ++i) w.row(i) /= mask.row(i).sum() * a;
  return w;
}

Eigen::MatrixXd row_mean_weights(const Eigen::MatrixXd& mask) {
  Eigen::MatrixXd w = mask;
  for (int i = 0; i < w.rows(); ++i) w.row(i) /= mask.row(i).sum();
  return w;
}

Objective parse_objective(const std::string& name) {
  if (name == "infonce") return Objective::infonce;
  if (name == "jsd") return Objective::jsd;
  if (name == "sp_jsd") return Objective::sp_jsd;
  if (name == "triplet") return Objective::triplet;
  if (name == "bootstrap") return Objective::bootstrap;
  if (name == "barlow_twins") return Objective::barlow_twins;
  if (name == "vicreg") return Objective::vicreg;
  throw ConfigError(
      "unknown objective '" + name +
      "' (expected one of: infonce, jsd, sp_jsd, triplet, bootstrap, "
      "barlow_twins, vicreg)");
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::infonce: return "infonce";
    case Objective::jsd: return "jsd";
    case Objective::sp_jsd: return "sp_jsd";
    case Objective::triplet: return "triplet";
    case Objective::bootstrap: return "bootstrap";
    case Objective::barlow_twins: return "barlow_twins";
    case Objective::vicreg: return "vicreg";
  }
  throw ConfigError("unknown objective enum value");
}

bool needs_negatives(Objective o) {
  switch (o) {
    case Objective::infonce:
    case Objective::jsd:
    case Objective::sp_jsd:
    case Objective::triplet:
      return true;
    default:
      return false;
  }
}

void ObjectiveSpec::validate() const {
  if (!(tau > 0.0)) throw ConfigError("objective: tau must be positive");
  if (!(epsilon >= 0.0))
    throw ConfigError("objective: epsilon must be non-negative");
  if (lambda && !(*lambda >= 0.0))
    throw ConfigError("objective: lambda must be non-negative");
  if (!(mu >= 0.0)) throw ConfigError("objective: mu must be non-negative");
  if (!(gamma >= 0.0))
    throw ConfigError("objective: gamma must be non-negative");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0))
    throw ConfigError("objective: ema_decay must lie in [0, 1)");
}

double ObjectiveSpec::bt_lambda(int dim) const {
  if (lambda) return *lambda;
  if (dim <= 0) throw ConfigError("barlow_twins: dimension must be positive");
  return 1.0 / static_cast<double>(dim);
}

double ObjectiveSpec::vicreg_lambda() const { return lambda ? *lambda : 25.0; }

Critic::Critic(ParamStore& store, const std::string& prefix, int in_dim,
               int proj_dim, bool batchnorm, RngStream& rng)
    : mlp_(store, prefix + ".proj", {in_dim, proj_dim, proj_dim},
           Activation::relu, batchnorm, /*bias=*/false, rng) {}

Tensor Critic::project(Tape& t, Tensor x, bool training) const {
  return mlp_.forward(t, x, training);
}

Tensor Critic::scores(Tape& t, Tensor anchors, Tensor candidates,
                      bool training) const {
  Tensor za = t.l2_row_normalize(project(t, anchors, training));
  Tensor zc = t.l2_row_normalize(project(t, candidates, training));
  return t.matmul(za, t.transpose(zc));
}

Tensor infonce_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                    const Eigen::MatrixXd& neg, double tau) {
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be positive");
  int a = scores.rows(), c = scores.cols();
  check_contrast_masks("infonce", a, c, pos, neg);

  Tensor s = t.mul_scalar(scores, 1.0 / tau);
  // Per-row maximum over the pos/neg support, entering as a constant: the
  // shift cancels in both the value and the gradient but keeps exp bounded.
  // Entries outside the support are zeroed so arbitrary scores there can
  // never overflow or poison the log.
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
  Tensor e = t.exp(shifted);  // <= 1 on the support, exactly 1 elsewhere
  Tensor neg_sum = t.row_sum(t.mul(e, t.constant(neg)));  // A x 1
  Tensor denom = t.add(
      t.mul(e, sup),
      t.matmul(neg_sum, t.constant(Eigen::MatrixXd::Ones(1, c))));
  // Off-support entries are pinned to 1 so their log is 0; they carry zero
  // weight below, and their gradient path is already cut by the masking.
  Tensor denom_safe =
      t.add(t.mul(denom, sup),
            t.constant(Eigen::MatrixXd::Ones(a, c) - support));
  // log(e_ij / (e_ij + neg_sum_i)) at the positive entries only.
  Tensor log_ratio = t.sub(shifted, t.log(denom_safe));
  Tensor w = t.constant(anchor_mean_weights(pos));
  return t.mul_scalar(t.sum_all(t.mul(log_ratio, w)), -1.0);
}

Tensor jsd_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                const Eigen::MatrixXd& neg) {
  int a = scores.rows(), c = scores.cols();
  check_contrast_masks("jsd", a, c, pos, neg);
  constexpr double kFloor = 1e-12;
  Tensor d = t.clamp(t.sigmoid(scores), kFloor, 1.0 - kFloor);
  Tensor log_d = t.log(d);
  Tensor log_1md = t.log(t.sub(t.constant(Eigen::MatrixXd::Ones(a, c)), d));
  Tensor wp = t.constant(anchor_mean_weights(pos));
  Tensor wn = t.constant(anchor_mean_weights(neg));
  Tensor gain = t.add(t.sum_all(t.mul(log_d, wp)),
                      t.sum_all(t.mul(log_1md, wn)));
  return t.mul_scalar(gain, -1.0);
}

Tensor sp_jsd_loss(Tape& t, Tensor scores, const Eigen::MatrixXd& pos,
                   const Eigen::MatrixXd& neg) {
  int a = scores.rows(), c = scores.cols();
  check_contrast_masks("sp_jsd", a, c, pos, neg);
  Tensor sp_neg_s = t.softplus(t.mul_scalar(scores, -1.0));
  Tensor sp_s = t.softplus(scores);
  Tensor wp = t.constant(anchor_mean_weights(pos));
  Tensor wn = t.constant(anchor_mean_weights(neg));
  return t.add(t.sum_all(t.mul(sp_neg_s, wp)), t.sum_all(t.mul(sp_s, wn)));
}

Tensor triplet_loss(Tape& t, Tensor anchors, Tensor candidates,
                    const Eigen::MatrixXd& pos, const Eigen::MatrixXd& neg,
                    double epsilon) {
  if (!(epsilon >= 0.0))
    throw ConfigError("triplet: epsilon must be non-negative");
  if (anchors.cols() != candidates.cols())
    throw ValidationError("triplet: anchor and candidate dims differ");
  int a = anchors.rows(), c = candidates.rows();
  check_contrast_masks("triplet", a, c, pos, neg);

  // Pairwise squared distances via the norm expansion; rounding can push a
  // zero distance slightly negative, hence the relu, and the tiny floor
  // inside sqrt keeps the gradient finite at exactly coincident rows.
  Tensor a2 = t.row_sum(t.mul(anchors, anchors));
  Tensor c2 = t.row_sum(t.mul(candidates, candidates));
  Tensor cross = t.mul_scalar(t.matmul(anchors, t.transpose(candidates)), -2.0);
  Tensor d2 = t.add(
      t.add(cross, t.matmul(a2, t.constant(Eigen::MatrixXd::Ones(1, c)))),
      t.matmul(t.constant(Eigen::MatrixXd::Ones(a, 1)), t.transpose(c2)));
  Tensor dist = t.sqrt(t.add_scalar(t.relu(d2), 1e-30));

  Tensor mean_pos = t.row_sum(t.mul(dist, t.constant(row_mean_weights(pos))));
  Tensor mean_neg = t.row_sum(t.mul(dist, t.constant(row_mean_weights(neg))));
  Tensor hinge = t.relu(t.add_scalar(t.sub(mean_pos, mean_neg), epsilon));
  return t.mean_all(hinge);
}

Tensor barlow_twins_loss(Tape& t, Tensor z1, Tensor z2, double lambda) {
  if (!(lambda >= 0.0))
    throw ConfigError("barlow_twins: lambda must be non-negative");
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw ValidationError("barlow_twins: view batches must have equal shape");
  if (z1.rows() < 2)
    throw ValidationError("barlow_twins: needs at least two rows");
  int n = z1.rows(), d = z1.cols();

  Tensor s1 = t.standardize_cols(z1, 0.0);
  Tensor s2 = t.standardize_cols(z2, 0.0);
  Tensor corr =
      t.mul_scalar(t.matmul(t.transpose(s1), s2), 1.0 / static_cast<double>(n));
  Tensor eye = t.constant(Eigen::MatrixXd::Identity(d, d));
  Tensor off_mask = t.constant(Eigen::MatrixXd::Ones(d, d) -
                               Eigen::MatrixXd::Identity(d, d));
  Tensor diag_gap = t.sub(eye, t.mul(corr, eye));  // (1 - C_ii) on diagonal
  Tensor on_term = t.sum_all(t.mul(diag_gap, diag_gap));
  Tensor off = t.mul(corr, off_mask);
  Tensor off_term = t.sum_all(t.mul(off, off));
  return t.add(on_term, t.mul_scalar(off_term, lambda));
}

namespace {

// Column-centered copy of z. N x D in, N x D out, plus the 1/(n-1) factor
// used by the variance and covariance terms.
Tensor center_cols(Tape& t, Tensor z) {
  int n = z.rows();
  Tensor mean = t.col_mean(z);  // 1 x D
  return t.sub(z, t.matmul(t.constant(Eigen::MatrixXd::Ones(n, 1)), mean));
}

Tensor vicreg_variance_term(Tape& t, Tensor z) {
  int n = z.rows(), d = z.cols();
  Tensor centered = center_cols(t, z);
  Tensor var = t.mul_scalar(t.col_sum(t.mul(centered, centered)),
                            1.0 / static_cast<double>(n - 1));
  Tensor std_dev = t.sqrt(t.add_scalar(var, 1e-30));
  Tensor hinge =
      t.relu(t.sub(t.constant(Eigen::MatrixXd::Ones(1, d)), std_dev));
  return t.mean_all(hinge);
}

Tensor vicreg_covariance_term(Tape& t, Tensor z) {
  int n = z.rows(), d = z.cols();
  Tensor centered = center_cols(t, z);
  Tensor cov = t.mul_scalar(t.matmul(t.transpose(centered), centered),
                            1.0 / static_cast<double>(n - 1));
  Tensor off_mask = t.constant(Eigen::MatrixXd::Ones(d, d) -
                               Eigen::MatrixXd::Identity(d, d));
  Tensor off = t.mul(cov, off_mask);
  return t.mul_scalar(t.sum_all(t.mul(off, off)), 1.0 / static_cast<double>(d));
}

}  // namespace

Tensor vicreg_loss(Tape& t, Tensor z1, Tensor z2, double lambda, double mu,
                   double gamma) {
  if (!(lambda >= 0.0) || !(mu >= 0.0) || !(gamma >= 0.0))
    throw ConfigError("vicreg: weights must be non-negative");
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw ValidationError("vicreg: view batches must have equal shape");
  if (z1.rows() < 2) throw ValidationError("vicreg: needs at least two rows");

  Tensor diff = t.sub(z1, z2);
  Tensor inv = t.mean_all(t.row_sum(t.mul(diff, diff)));
  Tensor var_term = t.add(vicreg_variance_term(t, z1),
                          vicreg_variance_term(t, z2));
  Tensor cov_term = t.add(vicreg_covariance_term(t, z1),
                          vicreg_covariance_term(t, z2));
  return t.add(t.add(t.mul_scalar(inv, lambda), t.mul_scalar(var_term, mu)),
               t.mul_scalar(cov_term, gamma));
}

Tensor cosine_alignment_loss(Tape& t, Tensor pred, Tensor target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ValidationError("cosine alignment: shapes must match");
  Tensor a = t.l2_row_normalize(pred);
  Tensor b = t.l2_row_normalize(target);
  return t.mul_scalar(t.mean_all(t.row_sum(t.mul(a, b))), -1.0);
}

BootstrapNets::BootstrapNets(EncoderSpec spec, BnFlags flags, RngStream& rng)
    : enc_spec(spec), bn(flags) {
  enc_spec.use_batchnorm = flags.encoder;
  enc_spec.validate();
  int e = enc_spec.hidden_dim;
  std::vector<int> head_dims = {e, e, e};

  enc_online = Encoder(online, "enc", enc_spec, rng);
  proj_online = Mlp(online, "proj", head_dims, Activation::relu,
                    flags.projector, /*bias=*/true, rng);
  pred_online = Mlp(online, "pred", head_dims, Activation::relu,
                    flags.predictor, /*bias=*/true, rng);

  enc_target = Encoder(target, "enc", enc_spec, rng);
  proj_target = Mlp(target, "proj", head_dims, Activation::relu,
                    flags.projector, /*bias=*/true, rng);
  pred_target = Mlp(target, "pred", head_dims, Activation::relu,
                    flags.predictor, /*bias=*/true, rng);

  target.copy_values_from(online);
}

Tensor bootstrap_loss(Tape& t, BootstrapNets& nets, const Graph& view1,
                      const Graph& view2, bool training) {
  if (view1.num_nodes() != view2.num_nodes())
    throw ValidationError(
        "bootstrap: views must share an aligned node set (equal node counts)");

  auto online_predict = [&](const Graph& g) {
    Tensor h = nets.enc_online.forward(t, g, training);
    Tensor z = nets.proj_online.forward(t, h, training);
    return nets.pred_online.forward(t, z, training);
  };
  auto target_project = [&](const Graph& g) {
    Tensor h = nets.enc_target.forward(t, g, training);
    Tensor z = nets.proj_target.forward(t, h, training);
    return t.detach(z);  // stop-gradient: the target never receives updates
  };

  Tensor p1 = online_predict(view1);
  Tensor p2 = online_predict(view2);
  Tensor z1t = target_project(view1);
  Tensor z2t = target_project(view2);

  Tensor forward_dir = cosine_alignment_loss(t, p1, z2t);
  Tensor backward_dir = cosine_alignment_loss(t, p2, z1t);
  return t.mul_scalar(t.add(forward_dir, backward_dir), 0.5);
}

void bootstrap_target_update(BootstrapNets& nets, double ema_decay) {
  if (!(ema_decay >= 0.0 && ema_decay < 1.0))
    throw ConfigError("bootstrap: ema_decay must lie in [0, 1)");
  nets.target.ema_update_from(nets.online, ema_decay);
}

double bl_step(BootstrapNets& nets, const Graph& view1, const Graph& view2,
               double ema_decay, AdamW& opt) {
  nets.online.zero_grad();
  Tape t;
  Tensor loss = bootstrap_loss(t, nets, view1, view2, true);
  double value = loss.scalar();
  t.backward(loss);
  opt.step(nets.online);
  bootstrap_target_update(nets, ema_decay);
  return value;
}

}  // namespace gcl
