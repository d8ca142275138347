#include "gcl/contrast.hpp"

#include <algorithm>

#include "gcl/error.hpp"

namespace gcl {

Mode parse_mode(const std::string& name) {
  if (name == "LL") return Mode::LL;
  if (name == "GL") return Mode::GL;
  if (name == "GG") return Mode::GG;
  throw ConfigError("unknown contrasting mode '" + name + "' (valid: LL, GL, GG)");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::LL: return "LL";
    case Mode::GL: return "GL";
    case Mode::GG: return "GG";
  }
  return "?";
}

Branch parse_branch(const std::string& name) {
  if (name == "dual") return Branch::dual;
  if (name == "single") return Branch::single;
  throw ConfigError("unknown branch '" + name + "' (valid: dual, single)");
}

std::string branch_name(Branch b) {
  return b == Branch::dual ? "dual" : "single";
}

void ContrastBatch::validate() const {
  const long a = anchors.val().rows();
  const long c = candidates.val().rows();
  if (pos_mask.rows() != a || pos_mask.cols() != c || neg_mask.rows() != a ||
      neg_mask.cols() != c)
    throw ValidationError("contrast batch: mask shape does not match anchors x candidates");
  for (long i = 0; i < a; ++i) {
    double pos = 0;
    for (long j = 0; j < c; ++j) {
      double p = pos_mask(i, j), n = neg_mask(i, j);
      if ((p != 0.0 && p != 1.0) || (n != 0.0 && n != 1.0))
        throw ValidationError("contrast batch: masks must be 0/1");
      if (p == 1.0 && n == 1.0)
        throw ValidationError("contrast batch: overlapping positive and negative at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
      pos += p;
    }
    if (pos == 0.0)
      throw ValidationError("contrast batch: anchor " + std::to_string(i) +
                            " has no positive");
  }
}

namespace {

// One direction of the same-scale sampler. Anchor originals are those alive
// in both maps; candidates are all rows of the counterpart view, optionally
// followed by the anchor view's own rows for intra-view negatives.
ContrastBatch same_scale_one_direction(Tape& t, Tensor anchor_view,
                                       Tensor other_view,
                                       const std::vector<int>& anchor_map,
                                       const std::vector<int>& other_map,
                                       bool intra) {
  const size_t n_orig = anchor_map.size();
  if (other_map.size() != n_orig)
    throw ValidationError("same-scale sampler: alignment maps differ in length");

  std::vector<int> anchor_rows, counterpart;
  std::vector<int> anchor_self;  // anchor's own row, for intra-view masking
  for (size_t o = 0; o < n_orig; ++o)
    if (anchor_map[o] != -1 && other_map[o] != -1) {
      anchor_rows.push_back(anchor_map[o]);
      counterpart.push_back(other_map[o]);
      anchor_self.push_back(anchor_map[o]);
    }
  if (anchor_rows.empty())
    throw ValidationError("same-scale sampler: no aligned pairs between the views");

  const long n_anchor = static_cast<long>(anchor_rows.size());
  const long n_other = other_view.val().rows();
  const long n_own = anchor_view.val().rows();
  const long n_cand = intra ? n_other + n_own : n_other;

  ContrastBatch b;
  b.anchors = t.gather_rows(anchor_view, anchor_rows);
  b.candidates = intra ? t.concat_rows(other_view, anchor_view) : other_view;
  b.pos_mask = Eigen::MatrixXd::Zero(n_anchor, n_cand);
  b.neg_mask = Eigen::MatrixXd::Zero(n_anchor, n_cand);
  for (long i = 0; i < n_anchor; ++i) {
    for (long j = 0; j < n_other; ++j)
      b.neg_mask(i, j) = (j == counterpart[i]) ? 0.0 : 1.0;
    b.pos_mask(i, counterpart[i]) = 1.0;
    if (intra)
      for (long j = 0; j < n_own; ++j)
        if (j != anchor_self[i]) b.neg_mask(i, n_other + j) = 1.0;
  }
  b.validate();
  return b;
}

}  // namespace

SameScaleBatches sample_same_scale(Tape& t, Tensor u, Tensor v,
                                   const std::vector<int>& map1,
                                   const std::vector<int>& map2,
                                   bool intra_view_negatives) {
  return {same_scale_one_direction(t, u, v, map1, map2, intra_view_negatives),
          same_scale_one_direction(t, v, u, map2, map1, intra_view_negatives)};
}

ContrastBatch sample_cross_scale_dual(Tape& t, Tensor s_anchor, Tensor h_other,
                                      const std::vector<int>& gmap_anchor,
                                      const std::vector<int>& gmap_other,
                                      const std::vector<int>& node_graph_other) {
  if (gmap_anchor.size() != gmap_other.size())
    throw ValidationError("cross-scale sampler: graph maps differ in length");
  const long n_nodes = h_other.val().rows();
  if (static_cast<long>(node_graph_other.size()) != n_nodes)
    throw ValidationError("cross-scale sampler: node_graph size mismatch");

  std::vector<int> anchor_rows;
  std::vector<int> other_gid;  // aligned graph's id in the candidate view
  for (size_t og = 0; og < gmap_anchor.size(); ++og)
    if (gmap_anchor[og] != -1 && gmap_other[og] != -1) {
      anchor_rows.push_back(gmap_anchor[og]);
      other_gid.push_back(gmap_other[og]);
    }
  if (anchor_rows.empty())
    throw ValidationError("cross-scale sampler: no aligned graphs between the views");
  if (anchor_rows.size() < 2)
    throw ValidationError(
        "cross-scale sampler: dual-branch needs at least two graphs to form negatives");

  ContrastBatch b;
  b.anchors = t.gather_rows(s_anchor, anchor_rows);
  b.candidates = h_other;
  const long n_anchor = static_cast<long>(anchor_rows.size());
  b.pos_mask = Eigen::MatrixXd::Zero(n_anchor, n_nodes);
  b.neg_mask = Eigen::MatrixXd::Zero(n_anchor, n_nodes);
  for (long i = 0; i < n_anchor; ++i)
    for (long j = 0; j < n_nodes; ++j) {
      if (node_graph_other[j] == other_gid[i])
        b.pos_mask(i, j) = 1.0;
      else
        b.neg_mask(i, j) = 1.0;
    }
  b.validate();
  return b;
}

ContrastBatch sample_cross_scale_single(Tape& t, Tensor s, Tensor h,
                                        Tensor h_corrupt,
                                        const std::vector<int>& node_graph) {
  const long n_nodes = h.val().rows();
  if (h_corrupt.val().rows() != n_nodes)
    throw ValidationError("cross-scale sampler: corrupted embeddings row mismatch");
  if (static_cast<long>(node_graph.size()) != n_nodes)
    throw ValidationError("cross-scale sampler: node_graph size mismatch");
  const long n_graphs = s.val().rows();

  ContrastBatch b;
  b.anchors = s;
  b.candidates = t.concat_rows(h, h_corrupt);
  b.pos_mask = Eigen::MatrixXd::Zero(n_graphs, 2 * n_nodes);
  b.neg_mask = Eigen::MatrixXd::Zero(n_graphs, 2 * n_nodes);
  for (long j = 0; j < n_nodes; ++j) {
    if (node_graph[j] < 0 || node_graph[j] >= n_graphs)
      throw ValidationError("cross-scale sampler: node_graph id out of range");
    b.pos_mask(node_graph[j], j) = 1.0;
    b.neg_mask(node_graph[j], n_nodes + j) = 1.0;
  }
  b.validate();
  return b;
}

Eigen::MatrixXd corrupt_shuffle(const Eigen::MatrixXd& x, RngStream& rng) {
  const long n = x.rows();
  if (n < 2)
    throw ValidationError("corrupt_shuffle: need at least 2 rows, got " +
                          std::to_string(n));
  std::vector<int> perm(n);
  while (true) {
    for (long i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    for (long i = n - 1; i > 0; --i) {
      long j = rng.uniform_int(i + 1);
      std::swap(perm[i], perm[j]);
    }
    bool identity = true;
    for (long i = 0; i < n; ++i)
      if (perm[i] != i) {
        identity = false;
        break;
      }
    if (!identity) break;
  }
  Eigen::MatrixXd out(n, x.cols());
  for (long i = 0; i < n; ++i) out.row(perm[i]) = x.row(i);
  return out;
}

}  // namespace gcl
