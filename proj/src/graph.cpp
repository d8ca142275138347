#include "gcl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace gcl {

using nlohmann::json;

Csr Csr::from_triplets(int rows, int cols,
                       std::vector<std::tuple<int, int, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(),
            [](const auto& a, const auto& b) {
              return std::tie(std::get<0>(a), std::get<1>(a)) <
                     std::tie(std::get<0>(b), std::get<1>(b));
            });
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  m.col.reserve(triplets.size());
  m.val.reserve(triplets.size());
  int prev_r = -1, prev_c = -1;
  for (const auto& [r, c, v] : triplets) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ValidationError("csr: index out of range");
    if (r == prev_r && c == prev_c)
      throw ValidationError("csr: duplicate entry at (" + std::to_string(r) +
                            "," + std::to_string(c) + ")");
    m.row_ptr[r + 1]++;
    m.col.push_back(c);
    m.val.push_back(v);
    prev_r = r;
    prev_c = c;
  }
  for (int r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

Eigen::MatrixXd Csr::dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col[k]) = val[k];
  return d;
}

Eigen::MatrixXd Csr::multiply(const Eigen::MatrixXd& x) const {
  if (x.rows() != cols)
    throw TensorError("spmm: inner dimensions " + std::to_string(cols) +
                      " vs " + std::to_string(x.rows()));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(rows, x.cols());
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      y.row(r) += val[k] * x.row(col[k]);
  return y;
}

Eigen::MatrixXd Csr::multiply_transposed(const Eigen::MatrixXd& x) const {
  if (x.rows() != rows)
    throw TensorError("spmm^T: inner dimensions " + std::to_string(rows) +
                      " vs " + std::to_string(x.rows()));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(cols, x.cols());
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      y.row(col[k]) += val[k] * x.row(r);
  return y;
}

Csr Csr::transposed() const {
  std::vector<std::tuple<int, int, double>> t;
  t.reserve(col.size());
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      t.emplace_back(col[k], r, val[k]);
  return from_triplets(cols, rows, std::move(t));
}

Graph Graph::build(int num_nodes, const std::vector<Edge>& edges,
                   Eigen::MatrixXd features,
                   std::optional<std::vector<int>> labels,
                   std::optional<std::vector<int>> graph_id, bool directed) {
  Graph g;
  g.num_nodes_ = num_nodes;
  g.directed_ = directed;
  g.features_ = std::move(features);
  g.labels_ = std::move(labels);
  g.graph_id_ = std::move(graph_id);

  std::vector<std::tuple<int, int, double>> arcs;
  if (directed) {
    for (const Edge& e : edges) arcs.emplace_back(e.u, e.v, e.w);
  } else {
    // Canonicalize to u < v; both-direction duplicates must agree on weight.
    std::map<std::pair<int, int>, double> canon;
    for (const Edge& e : edges) {
      if (e.u == e.v)
        throw ValidationError("graph: self-loop (" + std::to_string(e.u) +
                              "," + std::to_string(e.v) + ") not allowed");
      auto key = std::minmax(e.u, e.v);
      auto [it, inserted] = canon.emplace(key, e.w);
      if (!inserted && it->second != e.w)
        throw ValidationError("graph: conflicting weights for edge (" +
                              std::to_string(key.first) + "," +
                              std::to_string(key.second) + ")");
    }
    arcs.reserve(canon.size() * 2);
    for (const auto& [uv, w] : canon) {
      arcs.emplace_back(uv.first, uv.second, w);
      arcs.emplace_back(uv.second, uv.first, w);
    }
  }
  g.adj_ = Csr::from_triplets(num_nodes, num_nodes, std::move(arcs));
  g.validate();
  return g;
}

int Graph::num_graphs() const {
  if (!graph_id_) return 1;
  int m = 0;
  for (int id : *graph_id_) m = std::max(m, id + 1);
  return m;
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> out;
  for (int u = 0; u < num_nodes_; ++u)
    for (int k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k) {
      int v = adj_.col[k];
      if (directed_ || u < v) out.push_back({u, v, adj_.val[k]});
    }
  return out;
}

double Graph::weighted_degree(int u) const {
  double d = 0.0;
  for (int k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k) d += adj_.val[k];
  return d;
}

Graph Graph::with_features(Eigen::MatrixXd features) const {
  if (features.rows() != num_nodes_)
    throw ValidationError("graph: feature row count " +
                          std::to_string(features.rows()) +
                          " != num_nodes " + std::to_string(num_nodes_));
  Graph g = *this;
  g.features_ = std::move(features);
  return g;
}

void Graph::validate() const {
  if (static_cast<int>(adj_.row_ptr.size()) != num_nodes_ + 1)
    throw ValidationError("graph: csr row_ptr size mismatch");
  if (features_.rows() != num_nodes_)
    throw ValidationError("graph: feature row count " +
                          std::to_string(features_.rows()) + " != num_nodes " +
                          std::to_string(num_nodes_));
  if (labels_ && static_cast<int>(labels_->size()) != num_nodes_)
    throw ValidationError("graph: label count != num_nodes");
  if (graph_id_ && static_cast<int>(graph_id_->size()) != num_nodes_)
    throw ValidationError("graph: graph_id count != num_nodes");

  for (int u = 0; u < num_nodes_; ++u) {
    int prev = -1;
    for (int k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k) {
      int v = adj_.col[k];
      double w = adj_.val[k];
      if (v < 0 || v >= num_nodes_)
        throw ValidationError("graph: arc target " + std::to_string(v) +
                              " out of range for " +
                              std::to_string(num_nodes_) + " nodes");
      if (v == u) throw ValidationError("graph: self-loop at node " + std::to_string(u));
      if (v <= prev)
        throw ValidationError("graph: csr columns not strictly ascending in row " +
                              std::to_string(u));
      if (!std::isfinite(w) || w < 0.0)
        throw ValidationError("graph: non-finite or negative weight on arc (" +
                              std::to_string(u) + "," + std::to_string(v) + ")");
      prev = v;
    }
  }
  if (!directed_) {
    // Symmetry with equal weights.
    for (int u = 0; u < num_nodes_; ++u)
      for (int k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k) {
        int v = adj_.col[k];
        const int lo = adj_.row_ptr[v], hi = adj_.row_ptr[v + 1];
        auto it = std::lower_bound(adj_.col.begin() + lo, adj_.col.begin() + hi, u);
        if (it == adj_.col.begin() + hi || *it != u)
          throw ValidationError("graph: missing reverse arc for (" +
                                std::to_string(u) + "," + std::to_string(v) + ")");
        int idx = static_cast<int>(it - adj_.col.begin());
        if (adj_.val[idx] != adj_.val[k])
          throw ValidationError("graph: asymmetric weight on edge (" +
                                std::to_string(u) + "," + std::to_string(v) + ")");
      }
  }
  if (graph_id_) {
    int m = num_graphs();
    std::vector<int> count(m, 0);
    for (int id : *graph_id_) {
      if (id < 0) throw ValidationError("graph: negative graph_id");
      count[id]++;
    }
    for (int i = 0; i < m; ++i)
      if (count[i] == 0)
        throw ValidationError("graph: empty graph_id group " + std::to_string(i));
    // Arcs must stay within one member graph.
    for (int u = 0; u < num_nodes_; ++u)
      for (int k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k)
        if ((*graph_id_)[u] != (*graph_id_)[adj_.col[k]])
          throw ValidationError("graph: arc crosses graph_id groups");
  }
}

DerivedMatrix derive(const Graph& g, MatrixKind kind) {
  const int n = g.num_nodes();
  const Csr& a = g.adjacency();
  std::vector<std::tuple<int, int, double>> t;

  if (kind == MatrixKind::sym_norm_selfloop) {
    // D~ includes the added self-loop weight 1.
    std::vector<double> dinv_sqrt(n);
    for (int u = 0; u < n; ++u) dinv_sqrt[u] = 1.0 / std::sqrt(g.weighted_degree(u) + 1.0);
    for (int u = 0; u < n; ++u) {
      t.emplace_back(u, u, dinv_sqrt[u] * dinv_sqrt[u]);
      for (int k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k)
        t.emplace_back(u, a.col[k], dinv_sqrt[u] * a.val[k] * dinv_sqrt[a.col[k]]);
    }
  } else {
    for (int u = 0; u < n; ++u) {
      double d = g.weighted_degree(u);
      if (d == 0.0) {
        t.emplace_back(u, u, 1.0);  // isolated node: self-loop fallback
      } else {
        for (int k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k)
          t.emplace_back(u, a.col[k], a.val[k] / d);
      }
    }
  }
  return {kind, Csr::from_triplets(n, n, std::move(t))};
}

namespace {

json graph_to_json(const Graph& g) {
  json j;
  j["num_nodes"] = g.num_nodes();
  j["directed"] = g.directed();
  json edges = json::array();
  for (const Edge& e : g.edge_list()) {
    if (e.w == 1.0)
      edges.push_back({e.u, e.v});
    else
      edges.push_back({e.u, e.v, e.w});
  }
  j["edges"] = std::move(edges);
  json feats = json::array();
  for (int i = 0; i < g.features().rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < g.features().cols(); ++k) row.push_back(g.features()(i, k));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["labels"] = g.labels() ? json(*g.labels()) : json(nullptr);
  j["graph_id"] = g.graph_id() ? json(*g.graph_id()) : json(nullptr);
  return j;
}

Graph graph_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("graph file: expected a JSON object");
  for (const char* field : {"num_nodes", "edges", "features"})
    if (!j.contains(field))
      throw ParseError(std::string("graph file: missing field '") + field + "'");
  if (!j["num_nodes"].is_number_integer())
    throw ParseError("graph file: 'num_nodes' must be an integer");
  const int n = j["num_nodes"].get<int>();
  if (n < 0) throw ParseError("graph file: negative num_nodes");
  bool directed = j.value("directed", false);

  std::vector<Edge> edges;
  if (!j["edges"].is_array()) throw ParseError("graph file: 'edges' must be an array");
  int line = 0;
  for (const auto& e : j["edges"]) {
    ++line;
    if (!e.is_array() || (e.size() != 2 && e.size() != 3))
      throw ParseError("graph file: edge #" + std::to_string(line) +
                       " must be [u,v] or [u,v,w]");
    if (!e[0].is_number_integer() || !e[1].is_number_integer())
      throw ParseError("graph file: edge #" + std::to_string(line) +
                       " endpoints must be integers");
    Edge edge{e[0].get<int>(), e[1].get<int>(), 1.0};
    if (e.size() == 3) {
      if (!e[2].is_number()) throw ParseError("graph file: edge #" + std::to_string(line) +
                                              " weight must be a number");
      edge.w = e[2].get<double>();
    }
    edges.push_back(edge);
  }

  const auto& jf = j["features"];
  if (!jf.is_array() || static_cast<int>(jf.size()) != n)
    throw ParseError("graph file: 'features' must be an array of num_nodes rows");
  int fdim = jf.empty() ? 0 : static_cast<int>(jf[0].size());
  Eigen::MatrixXd feats(n, fdim);
  for (int i = 0; i < n; ++i) {
    if (!jf[i].is_array() || static_cast<int>(jf[i].size()) != fdim)
      throw ParseError("graph file: feature row " + std::to_string(i) +
                       " has inconsistent width");
    for (int k = 0; k < fdim; ++k) {
      if (!jf[i][k].is_number())
        throw ParseError("graph file: feature (" + std::to_string(i) + "," +
                         std::to_string(k) + ") must be a number");
      feats(i, k) = jf[i][k].get<double>();
    }
  }

  std::optional<std::vector<int>> labels;
  if (j.contains("labels") && !j["labels"].is_null()) {
    if (!j["labels"].is_array()) throw ParseError("graph file: 'labels' must be array or null");
    labels = j["labels"].get<std::vector<int>>();
  }
  std::optional<std::vector<int>> graph_id;
  if (j.contains("graph_id") && !j["graph_id"].is_null()) {
    if (!j["graph_id"].is_array())
      throw ParseError("graph file: 'graph_id' must be array or null");
    graph_id = j["graph_id"].get<std::vector<int>>();
  }

  // Range check before CSR construction for a friendlier message.
  for (int line2 = 0; line2 < static_cast<int>(edges.size()); ++line2) {
    const Edge& e = edges[line2];
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw ValidationError("graph file: edge #" + std::to_string(line2 + 1) + " (" +
                            std::to_string(e.u) + "," + std::to_string(e.v) +
                            ") out of range for num_nodes=" + std::to_string(n));
  }
  return Graph::build(n, edges, std::move(feats), std::move(labels),
                      std::move(graph_id), directed);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("JSON parse error in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

Graph load_graph(const std::string& path) {
  json j = load_json_file(path);
  if (j.contains("graphs")) {
    auto gs = load_graphs(path);
    return batch_graphs(gs);
  }
  return graph_from_json(j);
}

std::vector<Graph> load_graphs(const std::string& path) {
  json j = load_json_file(path);
  std::vector<Graph> out;
  if (j.contains("graphs")) {
    if (!j["graphs"].is_array()) throw ParseError("graph file: 'graphs' must be an array");
    for (const auto& jg : j["graphs"]) out.push_back(graph_from_json(jg));
  } else {
    out.push_back(graph_from_json(j));
  }
  return out;
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << graph_to_json(g).dump(1) << "\n";
}

void save_graphs(const std::vector<Graph>& gs, const std::string& path) {
  json j;
  j["graphs"] = json::array();
  for (const Graph& g : gs) j["graphs"].push_back(graph_to_json(g));
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << j.dump(1) << "\n";
}

Graph batch_graphs(const std::vector<Graph>& gs) {
  if (gs.empty()) throw ValidationError("batch_graphs: empty graph list");
  int total = 0, fdim = static_cast<int>(gs[0].features().cols());
  for (const Graph& g : gs) {
    if (g.directed()) throw ValidationError("batch_graphs: directed graphs unsupported");
    if (g.features().cols() != fdim)
      throw ValidationError("batch_graphs: inconsistent feature widths");
    total += g.num_nodes();
  }
  Eigen::MatrixXd feats(total, fdim);
  std::vector<Edge> edges;
  std::vector<int> labels, graph_id;
  bool have_labels = true;
  int offset = 0;
  for (int gi = 0; gi < static_cast<int>(gs.size()); ++gi) {
    const Graph& g = gs[gi];
    for (const Edge& e : g.edge_list())
      edges.push_back({e.u + offset, e.v + offset, e.w});
    feats.middleRows(offset, g.num_nodes()) = g.features();
    for (int u = 0; u < g.num_nodes(); ++u) graph_id.push_back(gi);
    if (g.labels())
      for (int u = 0; u < g.num_nodes(); ++u) labels.push_back((*g.labels())[u]);
    else
      have_labels = false;
    offset += g.num_nodes();
  }
  return Graph::build(total, edges, std::move(feats),
                      have_labels ? std::optional(labels) : std::nullopt,
                      std::optional(graph_id), false);
}

}  // namespace gcl
