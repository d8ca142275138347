#include "gcl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gcl/error.hpp"

namespace gcl {

Scheme parse_scheme(const std::string& name) {
  if (name == "ER") return Scheme::ER;
  if (name == "EA") return Scheme::EA;
  if (name == "EF") return Scheme::EF;
  if (name == "ND") return Scheme::ND;
  if (name == "RWS") return Scheme::RWS;
  if (name == "PPR") return Scheme::PPR;
  if (name == "MDK") return Scheme::MDK;
  if (name == "FM") return Scheme::FM;
  if (name == "FD") return Scheme::FD;
  if (name == "Identity") return Scheme::Identity;
  throw ConfigError("unknown augmentation scheme '" + name +
                    "' (valid: ER, EA, EF, ND, RWS, PPR, MDK, FM, FD, Identity)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ER: return "ER";
    case Scheme::EA: return "EA";
    case Scheme::EF: return "EF";
    case Scheme::ND: return "ND";
    case Scheme::RWS: return "RWS";
    case Scheme::PPR: return "PPR";
    case Scheme::MDK: return "MDK";
    case Scheme::FM: return "FM";
    case Scheme::FD: return "FD";
    case Scheme::Identity: return "Identity";
  }
  return "?";
}

void Augmentor::validate() const {
  if (prob < 0.0 || prob > 1.0)
    throw ConfigError(scheme_name(scheme) + ": prob must lie in [0,1], got " +
                      std::to_string(prob));
  if (scheme == Scheme::ND && prob >= 1.0)
    throw ConfigError("ND: drop probability must lie in [0,1)");
  if (scheme == Scheme::PPR && (alpha <= 0.0 || alpha >= 1.0))
    throw ConfigError("PPR: alpha must lie in (0,1), got " + std::to_string(alpha));
  if (scheme == Scheme::MDK && k_steps < 1)
    throw ConfigError("MDK: k_steps must be >= 1, got " + std::to_string(k_steps));
  if ((scheme == Scheme::PPR || scheme == Scheme::MDK) && eps_threshold < 0.0)
    throw ConfigError(scheme_name(scheme) + ": eps_threshold must be >= 0");
  if (scheme == Scheme::RWS && walk_budget < 0)
    throw ConfigError("RWS: walk_budget must be >= 1 (or 0 for member size)");
}

void Composite::validate() const {
  if (children.empty()) throw ConfigError("composite augmentor: no children");
  for (const Augmentor& a : children) a.validate();
  if (mode == CompositeMode::random_choice &&
      (k < 1 || k > static_cast<int>(children.size())))
    throw ConfigError("composite augmentor: k must lie in [1, #children]");
}

ViewResult identity_view(const Graph& g) {
  ViewResult v{g, std::vector<int>(g.num_nodes()), std::vector<int>(g.num_graphs())};
  for (int i = 0; i < g.num_nodes(); ++i) v.node_map[i] = i;
  for (int i = 0; i < g.num_graphs(); ++i) v.graph_map[i] = i;
  return v;
}

ViewResult induced_subgraph(const Graph& g, const std::vector<bool>& keep) {
  const int n = g.num_nodes();
  std::vector<int> node_map(n, -1);
  int kept = 0;
  for (int v = 0; v < n; ++v)
    if (keep[v]) node_map[v] = kept++;
  if (kept == 0) throw ValidationError("induced subgraph: no surviving nodes");

  std::vector<Edge> edges;
  for (const Edge& e : g.edge_list())
    if (keep[e.u] && keep[e.v]) edges.push_back({node_map[e.u], node_map[e.v], e.w});

  Eigen::MatrixXd feats(kept, g.features().cols());
  std::optional<std::vector<int>> labels;
  if (g.labels()) labels = std::vector<int>(kept);
  for (int v = 0; v < n; ++v)
    if (keep[v]) {
      feats.row(node_map[v]) = g.features().row(v);
      if (labels) (*labels)[node_map[v]] = (*g.labels())[v];
    }

  // Member graphs that lost every node vanish; survivors are relabeled.
  std::vector<int> graph_map;
  std::optional<std::vector<int>> graph_id;
  if (g.graph_id()) {
    graph_map.assign(g.num_graphs(), -1);
    int next = 0;
    for (int v = 0; v < n; ++v)
      if (keep[v]) {
        int old = (*g.graph_id())[v];
        if (graph_map[old] == -1) graph_map[old] = next++;
      }
    graph_id = std::vector<int>(kept);
    for (int v = 0; v < n; ++v)
      if (keep[v]) (*graph_id)[node_map[v]] = graph_map[(*g.graph_id())[v]];
  } else {
    graph_map = {0};
  }

  return {Graph::build(kept, edges, std::move(feats), std::move(labels),
                       std::move(graph_id), false),
          std::move(node_map), std::move(graph_map)};
}

Graph edge_removing(const Graph& g, double p_r, RngStream& rng) {
  std::vector<Edge> kept;
  for (const Edge& e : g.edge_list())
    if (!rng.bernoulli(p_r)) kept.push_back(e);
  return Graph::build(g.num_nodes(), kept, g.features(), g.labels(),
                      g.graph_id(), false);
}

namespace {

// Unordered node pairs eligible for addition: same member graph, no existing
// edge. Pairs are indexed lexicographically within each member so a uniform
// index draw is a uniform absent-pair draw.
struct AbsentPairs {
  const Graph& g;

  explicit AbsentPairs(const Graph& graph) : g(graph) {
    // Nodes of a member are not necessarily contiguous in general, but all
    // our builders lay members out contiguously; handle the general case by
    // collecting node lists.
    if (g.graph_id()) {
      groups.assign(g.num_graphs(), {});
      for (int v = 0; v < g.num_nodes(); ++v)
        groups[(*g.graph_id())[v]].push_back(v);
    } else {
      groups.assign(1, {});
      groups[0].resize(g.num_nodes());
      for (int v = 0; v < g.num_nodes(); ++v) groups[0][v] = v;
    }
    total_pairs = 0;
    for (const auto& nodes : groups) {
      long m = static_cast<long>(nodes.size());
      total_pairs += m * (m - 1) / 2;
    }
  }

  bool has_edge(int u, int v) const {
    auto [lo, hi] = g.neighbor_range(u);
    const auto& col = g.adjacency().col;
    return std::binary_search(col.begin() + lo, col.begin() + hi, v);
  }

  long absent_count() const { return total_pairs - g.num_edges(); }

  // Uniform pair among all same-member unordered pairs (present or absent).
  std::pair<int, int> draw_pair(RngStream& rng) const {
    long idx = rng.uniform_int(total_pairs);
    for (const auto& nodes : groups) {
      long m = static_cast<long>(nodes.size());
      long pairs = m * (m - 1) / 2;
      if (idx < pairs) {
        // Unrank idx into (i, j), i < j.
        long i = 0;
        long remaining = idx;
        while (remaining >= m - 1 - i) {
          remaining -= m - 1 - i;
          ++i;
        }
        long j = i + 1 + remaining;
        return {nodes[i], nodes[j]};
      }
      idx -= pairs;
    }
    throw Error("edge_adding: pair unranking out of range");
  }

  std::vector<std::vector<int>> groups;
  long total_pairs = 0;
};

}  // namespace

Graph edge_adding(const Graph& g, double p_a, RngStream& rng) {
  AbsentPairs pairs(g);
  long absent = pairs.absent_count();
  long count = rng.binomial(absent, p_a);

  std::vector<Edge> edges = g.edge_list();
  std::set<std::pair<int, int>> chosen;
  // Rejection-sample distinct absent pairs; falls back to enumeration when
  // the graph is dense enough that rejection stalls.
  long attempts = 0, cap = 50 * count + 1000;
  while (static_cast<long>(chosen.size()) < count && attempts < cap) {
    ++attempts;
    auto [u, v] = pairs.draw_pair(rng);
    if (u > v) std::swap(u, v);
    if (pairs.has_edge(u, v)) continue;
    chosen.insert({u, v});
  }
  if (static_cast<long>(chosen.size()) < count) {
    std::vector<std::pair<int, int>> all_absent;
    for (const auto& nodes : pairs.groups)
      for (size_t i = 0; i < nodes.size(); ++i)
        for (size_t j = i + 1; j < nodes.size(); ++j) {
          int u = nodes[i], v = nodes[j];
          if (u > v) std::swap(u, v);
          if (!pairs.has_edge(u, v) && !chosen.count({u, v}))
            all_absent.emplace_back(u, v);
        }
    while (static_cast<long>(chosen.size()) < count && !all_absent.empty()) {
      long pick = rng.uniform_int(static_cast<long>(all_absent.size()));
      chosen.insert(all_absent[pick]);
      all_absent.erase(all_absent.begin() + pick);
    }
  }
  for (const auto& [u, v] : chosen) edges.push_back({u, v, 1.0});
  return Graph::build(g.num_nodes(), edges, g.features(), g.labels(),
                      g.graph_id(), false);
}

Graph edge_flipping(const Graph& g, double p, RngStream& rng) {
  RngStream add_rng = rng.substream("ea");
  RngStream rem_rng = rng.substream("er");
  return edge_removing(edge_adding(g, p, add_rng), p, rem_rng);
}

ViewResult node_dropping(const Graph& g, double p_d, RngStream& rng) {
  if (p_d >= 1.0) throw ValidationError("ND: drop probability must lie in [0,1)");
  std::vector<bool> keep(g.num_nodes());
  int kept = 0;
  for (int v = 0; v < g.num_nodes(); ++v) {
    keep[v] = !rng.bernoulli(p_d);
    kept += keep[v];
  }
  if (kept == 0)
    throw ValidationError("ND: all nodes dropped; retry with lower probability");
  return induced_subgraph(g, keep);
}

std::vector<int> random_walk_path(const Graph& g, int start, double p_e,
                                  int budget, RngStream& rng) {
  std::vector<int> path;
  path.reserve(budget);
  int cur = start;
  path.push_back(cur);
  for (int step = 1; step < budget; ++step) {
    if (rng.bernoulli(p_e)) {
      cur = start;
    } else {
      auto [lo, hi] = g.neighbor_range(cur);
      if (hi == lo)
        cur = start;  // isolated position: restart
      else
        cur = g.adjacency().col[lo + rng.uniform_int(hi - lo)];
    }
    path.push_back(cur);
  }
  return path;
}

ViewResult rw_subgraph(const Graph& g, double p_e, int walk_budget,
                       RngStream& rng) {
  if (g.num_edges() == 0)
    throw ValidationError("RWS: graph has no edges to walk on");
  std::vector<std::vector<int>> groups;
  if (g.graph_id()) {
    groups.assign(g.num_graphs(), {});
    for (int v = 0; v < g.num_nodes(); ++v) groups[(*g.graph_id())[v]].push_back(v);
  } else {
    groups.assign(1, {});
    for (int v = 0; v < g.num_nodes(); ++v) groups[0].push_back(v);
  }

  std::vector<bool> keep(g.num_nodes(), false);
  for (const auto& nodes : groups) {
    int budget = walk_budget > 0 ? walk_budget : static_cast<int>(nodes.size());
    int start = nodes[rng.uniform_int(static_cast<long>(nodes.size()))];
    for (int v : random_walk_path(g, start, p_e, budget, rng)) keep[v] = true;
  }
  return induced_subgraph(g, keep);
}

Eigen::MatrixXd ppr_scores(const Graph& g, double alpha) {
  const int n = g.num_nodes();
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  Eigen::MatrixXd s = alpha * Eigen::MatrixXd::Identity(n, n);
  for (int it = 0; it < 1000; ++it) {
    Eigen::MatrixXd next =
        alpha * Eigen::MatrixXd::Identity(n, n) + (1.0 - alpha) * s * t_dense;
    double delta = (next - s).cwiseAbs().maxCoeff();
    s = std::move(next);
    if (delta < 1e-9) return s;
  }
  throw Error("PPR: fixed-point iteration did not converge in 1000 iterations");
}

Eigen::MatrixXd mdk_scores(const Graph& g, int k_steps) {
  const int n = g.num_nodes();
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k <= k_steps; ++k) {
    power = power * t_dense;
    sum += power;
  }
  return sum / static_cast<double>(k_steps);
}

namespace {

Graph diffusion_graph(const Graph& g, Eigen::MatrixXd s, double eps_threshold) {
  const int n = g.num_nodes();
  // Threshold, drop diagonal, then symmetrize by averaging with the
  // transpose. Exact zeros never become edges.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (s(i, j) < eps_threshold) s(i, j) = 0.0;
  s.diagonal().setZero();
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());

  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (sym(u, v) > 0.0) edges.push_back({u, v, sym(u, v)});
  return Graph::build(n, edges, g.features(), g.labels(), g.graph_id(), false);
}

}  // namespace

Graph ppr_diffusion(const Graph& g, double alpha, double eps_threshold) {
  return diffusion_graph(g, ppr_scores(g, alpha), eps_threshold);
}

Graph mdk_diffusion(const Graph& g, int k_steps, double eps_threshold) {
  return diffusion_graph(g, mdk_scores(g, k_steps), eps_threshold);
}

Graph feature_masking(const Graph& g, double p_m, RngStream& rng) {
  Eigen::MatrixXd feats = g.features();
  for (int j = 0; j < feats.cols(); ++j)
    if (rng.bernoulli(p_m)) feats.col(j).setZero();
  return g.with_features(std::move(feats));
}

Graph feature_dropout(const Graph& g, double p_f, RngStream& rng) {
  Eigen::MatrixXd feats = g.features();
  for (int i = 0; i < feats.rows(); ++i)
    for (int j = 0; j < feats.cols(); ++j)
      if (rng.bernoulli(p_f)) feats(i, j) = 0.0;
  return g.with_features(std::move(feats));
}

ViewResult apply(const Augmentor& aug, const Graph& g, RngStream& rng) {
  aug.validate();
  auto keep_all = [&](Graph out) {
    ViewResult v = identity_view(g);
    v.graph = std::move(out);
    return v;
  };
  switch (aug.scheme) {
    case Scheme::ER: return keep_all(edge_removing(g, aug.prob, rng));
    case Scheme::EA: return keep_all(edge_adding(g, aug.prob, rng));
    case Scheme::EF: return keep_all(edge_flipping(g, aug.prob, rng));
    case Scheme::ND: return node_dropping(g, aug.prob, rng);
    case Scheme::RWS: return rw_subgraph(g, aug.prob, aug.walk_budget, rng);
    case Scheme::PPR: return keep_all(ppr_diffusion(g, aug.alpha, aug.eps_threshold));
    case Scheme::MDK: return keep_all(mdk_diffusion(g, aug.k_steps, aug.eps_threshold));
    case Scheme::FM: return keep_all(feature_masking(g, aug.prob, rng));
    case Scheme::FD: return keep_all(feature_dropout(g, aug.prob, rng));
    case Scheme::Identity: return identity_view(g);
  }
  throw Error("apply: unreachable scheme");
}

namespace {

std::vector<int> compose_maps(const std::vector<int>& first,
                              const std::vector<int>& second) {
  std::vector<int> out(first.size(), -1);
  for (size_t i = 0; i < first.size(); ++i)
    if (first[i] != -1) out[i] = second[first[i]];
  return out;
}

}  // namespace

ViewResult apply(const Composite& comp, const Graph& g, RngStream& rng) {
  comp.validate();
  std::vector<int> order;
  if (comp.mode == CompositeMode::compose_all) {
    order.resize(comp.children.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  } else {
    RngStream choice = rng.substream("choice");
    std::vector<int> pool(comp.children.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    for (int picked = 0; picked < comp.k; ++picked) {
      long j = picked + choice.uniform_int(static_cast<long>(pool.size()) - picked);
      std::swap(pool[picked], pool[j]);
      order.push_back(pool[picked]);
    }
    std::sort(order.begin(), order.end());  // apply in list order
  }

  ViewResult acc = identity_view(g);
  for (int idx : order) {
    RngStream child = rng.substream("compose", static_cast<uint64_t>(idx));
    ViewResult step = apply(comp.children[idx], acc.graph, child);
    acc.node_map = compose_maps(acc.node_map, step.node_map);
    acc.graph_map = compose_maps(acc.graph_map, step.graph_map);
    acc.graph = std::move(step.graph);
  }
  return acc;
}

}  // namespace gcl
