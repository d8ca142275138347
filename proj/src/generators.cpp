#include "gcl/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gcl/error.hpp"

namespace gcl {

std::vector<Split> make_splits(const std::vector<int>& labels, int n_splits,
                               uint64_t seed) {
  if (n_splits < 1) throw ValidationError("make_splits: n_splits must be >= 1");
  std::vector<int> items;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    if (labels[i] >= 0) items.push_back(i);
  const int n = static_cast<int>(items.size());
  if (n < 10)
    throw ValidationError("make_splits: need at least 10 labeled items, got " +
                          std::to_string(n));

  const int n_train = static_cast<int>(std::lround(0.1 * n));
  const int n_valid = static_cast<int>(std::lround(0.1 * n));
  std::vector<Split> out;
  out.reserve(n_splits);
  for (int s = 0; s < n_splits; ++s) {
    std::vector<int> perm = items;
    RngStream rng(seed + static_cast<uint64_t>(s));
    // Fisher-Yates from the stream so that equal seeds replay exactly.
    for (int i = n - 1; i > 0; --i) {
      int j = rng.uniform_int(0, i);
      std::swap(perm[i], perm[j]);
    }
    Split sp;
    sp.seed = seed + static_cast<uint64_t>(s);
    sp.train_idx.assign(perm.begin(), perm.begin() + n_train);
    sp.valid_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_valid);
    sp.test_idx.assign(perm.begin() + n_train + n_valid, perm.end());
    out.push_back(std::move(sp));
  }
  return out;
}

Graph gen_sbm(int n_per_block, int n_blocks, double p_in, double p_out,
              int feature_dim, double noise_sigma, uint64_t seed) {
  if (n_per_block < 1 || n_blocks < 1)
    throw ValidationError("gen_sbm: block sizes must be positive");
  if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
    throw ValidationError("gen_sbm: probabilities must lie in [0,1]");
  if (feature_dim < 1) throw ValidationError("gen_sbm: feature_dim must be >= 1");

  const int n = n_per_block * n_blocks;
  std::vector<int> block(n);
  for (int v = 0; v < n; ++v) block[v] = v / n_per_block;

  RngStream root(seed);
  RngStream edge_rng = root.substream("edges");
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      double p = (block[u] == block[v]) ? p_in : p_out;
      if (edge_rng.bernoulli(p)) edges.push_back({u, v, 1.0});
    }

  RngStream feat_rng = root.substream("features");
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(n, feature_dim);
  for (int v = 0; v < n; ++v)
    if (block[v] < feature_dim) feats(v, block[v]) = 1.0;
  if (noise_sigma > 0.0)
    for (int v = 0; v < n; ++v)
      for (int k = 0; k < feature_dim; ++k)
        feats(v, k) += noise_sigma * feat_rng.normal();

  return Graph::build(n, edges, std::move(feats), std::optional(block),
                      std::nullopt, false);
}

GraphFamily parse_family(const std::string& name) {
  if (name == "cycle") return GraphFamily::cycle;
  if (name == "tree") return GraphFamily::tree;
  if (name == "clique") return GraphFamily::clique;
  throw ConfigError("unknown graph family '" + name +
                    "' (valid: cycle, tree, clique)");
}

std::string family_name(GraphFamily f) {
  switch (f) {
    case GraphFamily::cycle: return "cycle";
    case GraphFamily::tree: return "tree";
    case GraphFamily::clique: return "clique";
  }
  return "?";
}

namespace {

std::vector<Edge> family_edges(GraphFamily f, int n, RngStream& rng) {
  std::vector<Edge> edges;
  switch (f) {
    case GraphFamily::cycle:
      for (int v = 0; v < n; ++v) edges.push_back({v, (v + 1) % n, 1.0});
      break;
    case GraphFamily::tree:
      // Random attachment: node i joins a uniformly chosen earlier node.
      for (int v = 1; v < n; ++v)
        edges.push_back({static_cast<int>(rng.uniform_int(0, v - 1)), v, 1.0});
      break;
    case GraphFamily::clique:
      for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) edges.push_back({u, v, 1.0});
      break;
  }
  return edges;
}

}  // namespace

std::vector<Graph> gen_graph_dataset(int n_graphs,
                                     const std::vector<GraphFamily>& classes,
                                     int size_min, int size_max, uint64_t seed) {
  if (n_graphs < 1) throw ValidationError("gen_graph_dataset: n_graphs must be >= 1");
  if (classes.empty()) throw ValidationError("gen_graph_dataset: empty class list");
  if (size_min < 3 || size_max < size_min)
    throw ValidationError("gen_graph_dataset: need 3 <= size_min <= size_max");

  RngStream root(seed);
  struct Proto {
    int n;
    int label;
    std::vector<Edge> edges;
  };
  std::vector<Proto> protos;
  protos.reserve(n_graphs);
  for (int i = 0; i < n_graphs; ++i) {
    RngStream rng = root.substream("graph", i);
    GraphFamily f = classes[i % classes.size()];
    int n = rng.uniform_int(size_min, size_max);
    protos.push_back({n, static_cast<int>(i % classes.size()), family_edges(f, n, rng)});
  }

  // Degrees normalized by the dataset-wide maximum so that family sizes
  // stay distinguishable (a per-graph maximum would erase clique size).
  int max_deg = 1;
  std::vector<std::vector<int>> degs(protos.size());
  for (size_t i = 0; i < protos.size(); ++i) {
    degs[i].assign(protos[i].n, 0);
    for (const Edge& e : protos[i].edges) {
      degs[i][e.u]++;
      degs[i][e.v]++;
    }
    for (int d : degs[i]) max_deg = std::max(max_deg, d);
  }

  std::vector<Graph> out;
  out.reserve(protos.size());
  for (size_t i = 0; i < protos.size(); ++i) {
    Eigen::MatrixXd feats(protos[i].n, 1);
    for (int v = 0; v < protos[i].n; ++v)
      feats(v, 0) = static_cast<double>(degs[i][v]) / max_deg;
    std::vector<int> labels(protos[i].n, protos[i].label);
    out.push_back(Graph::build(protos[i].n, protos[i].edges, std::move(feats),
                               std::optional(labels), std::nullopt, false));
  }
  return out;
}

}  // namespace gcl
