// View generators: topology and feature augmentations plus composition.
//
// Every augmentor is a pure function of (graph, params, seed). Node-dropping
// schemes relabel survivors densely and report index maps so cross-view
// positives can be aligned afterwards.
#pragma once

#include <string>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/rng.hpp"

namespace gcl {

enum class Scheme { ER, EA, EF, ND, RWS, PPR, MDK, FM, FD, Identity };

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

/// One augmentation. `prob` is the scheme's probability knob: removal (ER),
/// addition (EA), flip (EF), drop (ND), restart (RWS), mask (FM), dropout
/// (FD). Diffusion schemes use alpha / k_steps / eps_threshold instead;
/// walk_budget counts total visits per walk, 0 meaning the member size.
struct Augmentor {
  Scheme scheme = Scheme::Identity;
  double prob = 0.2;
  double alpha = 0.15;
  int k_steps = 3;
  double eps_threshold = 0.0;
  int walk_budget = 0;

  void validate() const;
};

enum class CompositeMode { compose_all, random_choice };

/// Ordered augmentor pipeline. compose_all applies every child in order;
/// random_choice draws k distinct children and applies them in list order.
struct Composite {
  std::vector<Augmentor> children;
  CompositeMode mode = CompositeMode::compose_all;
  int k = 1;

  void validate() const;
};

/// An augmented view with alignment maps back to the input graph:
/// node_map[orig] = new index or -1 if dropped; graph_map likewise for
/// member-graph ids (identity of length num_graphs when nothing dropped).
struct ViewResult {
  Graph graph;
  std::vector<int> node_map;
  std::vector<int> graph_map;
};

ViewResult identity_view(const Graph& g);

ViewResult apply(const Augmentor& aug, const Graph& g, RngStream& rng);
/// Children receive substream("compose", i) of rng, so replaying a child in
/// isolation with that stream reproduces its draw exactly.
ViewResult apply(const Composite& comp, const Graph& g, RngStream& rng);

// Individual schemes (apply() dispatches to these).
Graph edge_removing(const Graph& g, double p_r, RngStream& rng);
Graph edge_adding(const Graph& g, double p_a, RngStream& rng);
Graph edge_flipping(const Graph& g, double p, RngStream& rng);
ViewResult node_dropping(const Graph& g, double p_d, RngStream& rng);
ViewResult rw_subgraph(const Graph& g, double p_e, int walk_budget,
                       RngStream& rng);
Graph ppr_diffusion(const Graph& g, double alpha, double eps_threshold);
Graph mdk_diffusion(const Graph& g, int k_steps, double eps_threshold);
Graph feature_masking(const Graph& g, double p_m, RngStream& rng);
Graph feature_dropout(const Graph& g, double p_f, RngStream& rng);

/// Dense diffusion scores before thresholding/symmetrization, for oracle
/// comparison. PPR: alpha * sum_k (1-alpha)^k T^k via fixed-point iteration
/// (error if not converged within 1000 iterations). MDK: (1/K) sum_{k=1..K} T^k.
Eigen::MatrixXd ppr_scores(const Graph& g, double alpha);
Eigen::MatrixXd mdk_scores(const Graph& g, int k_steps);

/// Visit sequence (length = budget, starting at `start`) of a restart walk:
/// with prob p_e the walk returns to start, otherwise it moves to a uniform
/// neighbor; isolated positions restart.
std::vector<int> random_walk_path(const Graph& g, int start, double p_e,
                                  int budget, RngStream& rng);

/// Induced subgraph on the kept nodes with dense relabeling and maps.
ViewResult induced_subgraph(const Graph& g, const std::vector<bool>& keep);

}  // namespace gcl
