// Contrasting-mode samplers: which embedding pairs are positives and which
// are negatives, for same-scale (node/node, graph/graph) and cross-scale
// (graph/node) modes.
#pragma once

#include <string>
#include <vector>

#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

enum class Mode { LL, GL, GG };
enum class Branch { dual, single };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode m);
Branch parse_branch(const std::string& name);
std::string branch_name(Branch b);

struct ModeSpec {
  Mode mode = Mode::LL;
  Branch branch = Branch::dual;
  bool intra_view_negatives = false;
};

/// Anchor/candidate embeddings with 0/1 masks selecting positive and
/// negative candidate columns per anchor row.
struct ContrastBatch {
  Tensor anchors;
  Tensor candidates;
  Eigen::MatrixXd pos_mask;
  Eigen::MatrixXd neg_mask;

  /// Checks mask shapes, 0/1 entries, disjointness, and that every anchor
  /// has at least one positive.
  void validate() const;
};

struct SameScaleBatches {
  ContrastBatch first;   // anchors from u, candidates from v
  ContrastBatch second;  // anchors from v, candidates from u
};

/// Same-scale sampler (LL over nodes, GG over graphs). map1/map2 send an
/// original index to its row in u/v, or -1 if it vanished in that view.
/// Anchors are the originals present in both views; candidates are every row
/// of the other view (plus the anchor view itself minus the anchor when
/// intra_view_negatives is set). Positives are the aligned counterparts.
SameScaleBatches sample_same_scale(Tape& t, Tensor u, Tensor v,
                                   const std::vector<int>& map1,
                                   const std::vector<int>& map2,
                                   bool intra_view_negatives);

/// Cross-scale dual-branch sampler: graph anchors from one view against
/// node candidates from the other. gmap_anchor/gmap_other send an original
/// member-graph id to its row/new id in the respective view (-1 if gone);
/// node_graph_other holds the candidate view's graph id per node row.
/// Requires at least two aligned graphs (otherwise no negatives exist).
ContrastBatch sample_cross_scale_dual(Tape& t, Tensor s_anchor, Tensor h_other,
                                      const std::vector<int>& gmap_anchor,
                                      const std::vector<int>& gmap_other,
                                      const std::vector<int>& node_graph_other);

/// Cross-scale single-branch sampler: graph anchors from the uncorrupted
/// pass; positives are the anchor graph's own node rows in h, negatives the
/// same rows in h_corrupt.
ContrastBatch sample_cross_scale_single(Tape& t, Tensor s, Tensor h,
                                        Tensor h_corrupt,
                                        const std::vector<int>& node_graph);

/// Rows permuted by a uniform non-identity permutation.
Eigen::MatrixXd corrupt_shuffle(const Eigen::MatrixXd& x, RngStream& rng);

}  // namespace gcl
