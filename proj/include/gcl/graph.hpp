// Attributed graph container (CSR adjacency) and derived matrices.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gcl/error.hpp"

namespace gcl {

/// Compressed sparse row matrix with double weights. Column indices are
/// sorted ascending within each row and contain no duplicates.
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // size rows+1
  std::vector<int> col;      // size nnz
  std::vector<double> val;   // size nnz

  int nnz() const { return static_cast<int>(col.size()); }

  /// Builds from unsorted (r, c, v) triplets; duplicates are an error.
  static Csr from_triplets(int rows, int cols,
                           std::vector<std::tuple<int, int, double>> triplets);

  Eigen::MatrixXd dense() const;

  /// y = M * x  (dense right operand).
  Eigen::MatrixXd multiply(const Eigen::MatrixXd& x) const;
  /// y = M^T * x.
  Eigen::MatrixXd multiply_transposed(const Eigen::MatrixXd& x) const;

  Csr transposed() const;
};

/// A weighted edge of an undirected graph, stored once with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  double w = 1.0;
};

/// Immutable attributed graph.
///
/// Stored invariants (checked by validate()):
///   - no self-loops;
///   - undirected graphs store both arcs of every edge with equal weight;
///   - feature row count equals num_nodes; weights finite and >= 0;
///   - CSR columns sorted ascending per row, no duplicate arcs.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph from an edge list. For undirected graphs the list may
  /// contain each edge once (either direction) or both directions with equal
  /// weights; arcs are mirrored internally.
  static Graph build(int num_nodes, const std::vector<Edge>& edges,
                     Eigen::MatrixXd features,
                     std::optional<std::vector<int>> labels = std::nullopt,
                     std::optional<std::vector<int>> graph_id = std::nullopt,
                     bool directed = false);

  int num_nodes() const { return num_nodes_; }
  int num_arcs() const { return adj_.nnz(); }
  /// Number of undirected edges (arc pairs) for undirected graphs.
  int num_edges() const { return directed_ ? adj_.nnz() : adj_.nnz() / 2; }
  bool directed() const { return directed_; }

  const Csr& adjacency() const { return adj_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }
  const std::optional<std::vector<int>>& graph_id() const { return graph_id_; }

  /// Number of member graphs (1 when graph_id is absent).
  int num_graphs() const;

  /// Unique undirected edges as (u < v, w) triples, sorted.
  std::vector<Edge> edge_list() const;

  /// Neighbor range of node u in the CSR arrays.
  std::pair<int, int> neighbor_range(int u) const {
    return {adj_.row_ptr[u], adj_.row_ptr[u + 1]};
  }

  double weighted_degree(int u) const;
  int degree(int u) const { return adj_.row_ptr[u + 1] - adj_.row_ptr[u]; }

  /// Returns a copy with the feature matrix replaced (same topology).
  Graph with_features(Eigen::MatrixXd features) const;

  /// Throws ValidationError naming the violated rule if any invariant fails.
  void validate() const;

 private:
  int num_nodes_ = 0;
  Csr adj_;
  Eigen::MatrixXd features_;
  std::optional<std::vector<int>> labels_;
  std::optional<std::vector<int>> graph_id_;
  bool directed_ = false;
};

enum class MatrixKind { sym_norm_selfloop, rw_transition };

/// Sparse matrix derived from a graph's adjacency.
struct DerivedMatrix {
  MatrixKind kind;
  Csr matrix;
};

/// Builds D~^{-1/2} (A + I) D~^{-1/2} or the row-stochastic transition matrix
/// D^{-1} A. Isolated nodes receive a self-loop inside rw_transition only.
DerivedMatrix derive(const Graph& g, MatrixKind kind);

/// Loads a graph from the JSON container format. Multi-graph files are
/// batched into one Graph with graph_id set. Throws ParseError /
/// ValidationError.
Graph load_graph(const std::string& path);

/// Loads a multi-graph dataset; single-graph files yield one element.
std::vector<Graph> load_graphs(const std::string& path);

void save_graph(const Graph& g, const std::string& path);
void save_graphs(const std::vector<Graph>& gs, const std::string& path);

/// Merges per-graph containers into one batched Graph with graph_id set.
/// Node labels are carried through unchanged.
Graph batch_graphs(const std::vector<Graph>& gs);

}  // namespace gcl
