#include <doctest.h>

#include <cmath>
#include <set>

#include "gcl/augment.hpp"
#include "gcl/generators.hpp"

using namespace gcl;

namespace {

Graph k3() {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  return Graph::build(3, {{0, 1}, {1, 2}, {0, 2}}, x);
}

Graph path3() {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  return Graph::build(3, {{0, 1}, {1, 2}}, x);
}

bool same_graph(const Graph& a, const Graph& b) {
  return a.num_nodes() == b.num_nodes() &&
         a.adjacency().row_ptr == b.adjacency().row_ptr &&
         a.adjacency().col == b.adjacency().col &&
         a.adjacency().val == b.adjacency().val &&
         (a.features() - b.features()).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("edge removing at probability zero is the identity") {
  RngStream rng(1);
  Graph g = k3();
  CHECK(same_graph(edge_removing(g, 0.0, rng), g));
}

TEST_CASE("edge removing at probability one empties the topology") {
  RngStream rng(2);
  Graph out = edge_removing(k3(), 1.0, rng);
  CHECK(out.num_nodes() == 3);
  CHECK(out.num_edges() == 0);
  out.validate();
}

TEST_CASE("edge adding on a complete graph is the identity") {
  RngStream rng(3);
  Graph g = k3();
  CHECK(same_graph(edge_adding(g, 0.9, rng), g));
}

TEST_CASE("edge removing retention matches its binomial mean") {
  Graph g = gen_sbm(20, 1, 0.0, 0.0, 2, 0.0, 0);
  // build a deterministic 100-edge graph: ring 0..99 on 100 nodes
  std::vector<Edge> edges;
  for (int v = 0; v < 100; ++v) edges.push_back({v, (v + 1) % 100, 1.0});
  g = Graph::build(100, edges, Eigen::MatrixXd::Zero(100, 1));

  double total = 0;
  for (int t = 0; t < 10000; ++t) {
    RngStream rng(9000 + t);
    total += edge_removing(g, 0.5, rng).num_edges();
  }
  CHECK(std::abs(total / 10000.0 - 50.0) <= 0.15);
}

TEST_CASE("edge adding count follows the absent-pair binomial") {
  // Edgeless 20-node graph: 190 absent pairs, p=0.1 -> mean 19.
  Graph g = Graph::build(20, {}, Eigen::MatrixXd::Zero(20, 1));
  double total = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(7000 + t);
    total += edge_adding(g, 0.1, rng).num_edges();
  }
  double mean = total / trials;
  double se = std::sqrt(190 * 0.1 * 0.9 / trials);
  CHECK(std::abs(mean - 19.0) <= 3 * se);
}

TEST_CASE("edge adding never crosses member graphs") {
  auto gs = gen_graph_dataset(4, {GraphFamily::cycle, GraphFamily::tree}, 4, 6, 5);
  Graph b = batch_graphs(gs);
  for (int t = 0; t < 20; ++t) {
    RngStream rng(100 + t);
    Graph out = edge_adding(b, 0.5, rng);
    out.validate();
    const auto& id = *out.graph_id();
    for (const Edge& e : out.edge_list()) CHECK(id[e.u] == id[e.v]);
  }
}

TEST_CASE("node dropping at probability zero keeps the identity map") {
  RngStream rng(4);
  ViewResult v = node_dropping(k3(), 0.0, rng);
  CHECK(same_graph(v.graph, k3()));
  CHECK(v.node_map == std::vector<int>{0, 1, 2});
  CHECK(v.graph_map == std::vector<int>{0});
}

TEST_CASE("node dropping produces the induced subgraph with dense relabels") {
  // Drop node 1 of path 0-1-2 via an explicit keep mask.
  ViewResult v = induced_subgraph(path3(), {true, false, true});
  CHECK(v.graph.num_nodes() == 2);
  CHECK(v.graph.num_edges() == 0);  // both survivors isolated
  CHECK(v.node_map == std::vector<int>{0, -1, 1});
  CHECK(v.graph.features()(0, 0) == doctest::Approx(1.0));
  CHECK(v.graph.features()(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("node dropping at probability one is an error naming the scheme") {
  Augmentor nd{Scheme::ND, 1.0};
  RngStream rng(5);
  CHECK_THROWS_WITH_AS(apply(nd, k3(), rng), doctest::Contains("ND"),
                       ConfigError);
}

TEST_CASE("node dropping survivor count matches its binomial mean") {
  Graph g = Graph::build(100, {}, Eigen::MatrixXd::Zero(100, 1));
  double total = 0;
  int failures = 0;
  for (int t = 0; t < 10000; ++t) {
    RngStream rng(3000 + t);
    try {
      total += node_dropping(g, 0.3, rng).graph.num_nodes();
    } catch (const ValidationError&) {
      ++failures;  // all-dropped draws are astronomically unlikely here
    }
  }
  CHECK(failures == 0);
  CHECK(std::abs(total / 10000.0 - 70.0) <= 0.14);
}

TEST_CASE("node dropping relabels member graphs when one vanishes") {
  auto gs = gen_graph_dataset(3, {GraphFamily::cycle}, 4, 4, 6);
  Graph b = batch_graphs(gs);
  std::vector<bool> keep(12, true);
  for (int v = 4; v < 8; ++v) keep[v] = false;  // erase member 1
  ViewResult view = induced_subgraph(b, keep);
  CHECK(view.graph.num_graphs() == 2);
  CHECK(view.graph_map == std::vector<int>{0, -1, 1});
  view.graph.validate();
}

TEST_CASE("restart walk with budget one visits only the start") {
  RngStream rng(7);
  ViewResult v = rw_subgraph(k3(), 0.2, 1, rng);
  CHECK(v.graph.num_nodes() == 1);
  int survivors = 0;
  for (int m : v.node_map) survivors += (m != -1);
  CHECK(survivors == 1);
}

TEST_CASE("restart probability one pins the walk to its start") {
  for (int t = 0; t < 10; ++t) {
    RngStream rng(50 + t);
    ViewResult v = rw_subgraph(k3(), 1.0, 10, rng);
    CHECK(v.graph.num_nodes() == 1);
  }
}

TEST_CASE("restart walk on an edgeless graph is an error naming the scheme") {
  Graph g = Graph::build(3, {}, Eigen::MatrixXd::Zero(3, 1));
  RngStream rng(8);
  CHECK_THROWS_WITH_AS(rw_subgraph(g, 0.2, 3, rng), doctest::Contains("RWS"),
                       ValidationError);
}

TEST_CASE("restart walk keeps every member graph represented") {
  auto gs = gen_graph_dataset(4, {GraphFamily::cycle, GraphFamily::clique}, 4, 6, 9);
  Graph b = batch_graphs(gs);
  RngStream rng(10);
  ViewResult v = rw_subgraph(b, 0.3, 0, rng);
  CHECK(v.graph.num_graphs() == 4);
  for (int m : v.graph_map) CHECK(m != -1);
}

TEST_CASE("restart walk visit frequencies match an exact chain computation") {
  // Star: center 0 with leaves 1..4.
  Graph star = Graph::build(
      5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, Eigen::MatrixXd::Zero(5, 1));
  const double p_e = 0.3;
  const int budget = 6;
  const int walks = 20000;

  // Exact expected visit counts: average the per-start occupation sums of
  // the restart chain over the uniform start.
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(5);
  for (int s = 0; s < 5; ++s) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(5, 5);
    for (int x = 0; x < 5; ++x) {
      m(x, s) += p_e;
      auto [lo, hi] = star.neighbor_range(x);
      for (int k = lo; k < hi; ++k)
        m(x, star.adjacency().col[k]) += (1.0 - p_e) / (hi - lo);
    }
    Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(5);
    p(s) = 1.0;
    Eigen::RowVectorXd occ = p;
    for (int t = 1; t < budget; ++t) {
      p = p * m;
      occ += p;
    }
    expected += occ.transpose() / 5.0;
  }
  expected *= walks;

  Eigen::VectorXd observed = Eigen::VectorXd::Zero(5);
  RngStream rng(123);
  for (int w = 0; w < walks; ++w) {
    int start = static_cast<int>(rng.uniform_int(5));
    for (int v : random_walk_path(star, start, p_e, budget, rng)) observed(v) += 1.0;
  }

  double chi2 = 0.0;
  for (int j = 0; j < 5; ++j)
    chi2 += (observed(j) - expected(j)) * (observed(j) - expected(j)) / expected(j);
  CHECK(chi2 < 13.277);  // critical value, 4 degrees of freedom, level 0.01
}

TEST_CASE("ppr on an edgeless graph has identity scores") {
  Graph g = Graph::build(3, {}, Eigen::MatrixXd::Zero(3, 1));
  Eigen::MatrixXd s = ppr_scores(g, 0.3);
  CHECK((s - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ppr scores match the truncated power series") {
  Graph g = Graph::build(2, {{0, 1}}, Eigen::MatrixXd::Zero(2, 1));
  const double alpha = 0.15;
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  Eigen::MatrixXd series = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(2, 2);
  for (int k = 0; k < 1000; ++k) {
    series += alpha * std::pow(1.0 - alpha, k) * power;
    power = power * t_dense;
  }
  CHECK((ppr_scores(g, alpha) - series).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ppr scores match the series on a random graph too") {
  Graph g = gen_sbm(5, 2, 0.6, 0.2, 2, 0.0, 17);
  const double alpha = 0.25;
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  Eigen::MatrixXd series = Eigen::MatrixXd::Zero(10, 10);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(10, 10);
  for (int k = 0; k < 1000; ++k) {
    series += alpha * std::pow(1.0 - alpha, k) * power;
    power = power * t_dense;
  }
  CHECK((ppr_scores(g, alpha) - series).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("mdk with one step equals the transition matrix") {
  Graph g = path3();
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  CHECK((mdk_scores(g, 1) - t_dense).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mdk averages the first k transition powers") {
  Graph g = gen_sbm(4, 2, 0.7, 0.3, 2, 0.0, 19);
  Eigen::MatrixXd t_dense = derive(g, MatrixKind::rw_transition).matrix.dense();
  Eigen::MatrixXd want =
      (t_dense + t_dense * t_dense + t_dense * t_dense * t_dense) / 3.0;
  CHECK((mdk_scores(g, 3) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("diffusion graphs drop the diagonal and stay symmetric") {
  Graph g = gen_sbm(5, 2, 0.6, 0.1, 2, 0.0, 23);
  Graph p = ppr_diffusion(g, 0.15, 0.01);
  p.validate();
  for (const Edge& e : p.edge_list()) CHECK(e.u != e.v);
  Graph m = mdk_diffusion(g, 2, 0.0);
  m.validate();
  // symmetrized weight equals the average of the two directed scores
  Eigen::MatrixXd s = mdk_scores(g, 2);
  for (const Edge& e : m.edge_list())
    CHECK(e.w == doctest::Approx(0.5 * (s(e.u, e.v) + s(e.v, e.u))).epsilon(1e-12));
}

TEST_CASE("feature masking zeroes whole columns or none") {
  Graph g = gen_sbm(10, 2, 0.5, 0.1, 6, 1.0, 29);
  RngStream rng0(31);
  CHECK(same_graph(feature_masking(g, 0.0, rng0), g));
  for (int t = 0; t < 20; ++t) {
    RngStream rng(200 + t);
    Graph out = feature_masking(g, 0.4, rng);
    for (int j = 0; j < out.features().cols(); ++j) {
      bool zeroed = out.features().col(j).cwiseAbs().maxCoeff() == 0.0;
      bool untouched = (out.features().col(j) - g.features().col(j)).cwiseAbs().maxCoeff() == 0.0;
      CHECK((zeroed || untouched));
    }
  }
}

TEST_CASE("feature dropout zero fraction matches its rate") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(100, 100);
  Graph g = Graph::build(100, {{0, 1}}, x);
  RngStream rng(37);
  Graph out = feature_dropout(g, 0.5, rng);
  double zeros = (out.features().array() == 0.0).count();
  CHECK(std::abs(zeros / 10000.0 - 0.5) <= 0.015);
}

TEST_CASE("every scheme is pure given the seed and passes validation") {
  auto gs = gen_graph_dataset(3, {GraphFamily::cycle, GraphFamily::clique}, 4, 6, 41);
  Graph g = batch_graphs(gs);
  std::vector<Augmentor> augs = {
      {Scheme::ER, 0.3},
      {Scheme::EA, 0.2},
      {Scheme::EF, 0.25},
      {Scheme::ND, 0.3},
      {Scheme::RWS, 0.2, 0.15, 3, 0.0, 5},
      {Scheme::PPR, 0.2, 0.15, 3, 0.01, 0},
      {Scheme::MDK, 0.2, 0.15, 2, 0.01, 0},
      {Scheme::FM, 0.3},
      {Scheme::FD, 0.3},
      {Scheme::Identity},
  };
  for (const Augmentor& a : augs) {
    CAPTURE(scheme_name(a.scheme));
    RngStream r1(55), r2(55);
    ViewResult v1 = apply(a, g, r1);
    ViewResult v2 = apply(a, g, r2);
    v1.graph.validate();
    CHECK(same_graph(v1.graph, v2.graph));
    CHECK(v1.node_map == v2.node_map);
    CHECK(v1.graph_map == v2.graph_map);
  }
}

TEST_CASE("compose_all replays children on split streams") {
  Graph g = gen_sbm(6, 2, 0.6, 0.2, 4, 0.5, 43);
  Composite comp{{{Scheme::ER, 0.2}, {Scheme::FM, 0.3}},
                 CompositeMode::compose_all, 1};
  RngStream rng(77);
  ViewResult combined = apply(comp, g, rng);

  RngStream base(77);
  RngStream c0 = base.substream("compose", 0);
  RngStream c1 = base.substream("compose", 1);
  Graph manual = feature_masking(edge_removing(g, 0.2, c0), 0.3, c1);
  CHECK(same_graph(combined.graph, manual));
}

TEST_CASE("random_choice applies exactly k children") {
  Graph g = k3();
  Composite comp{{{Scheme::FM, 1.0}, {Scheme::ER, 1.0}, {Scheme::Identity}},
                 CompositeMode::random_choice, 1};
  int saw_fm = 0, saw_er = 0, saw_id = 0;
  for (int t = 0; t < 60; ++t) {
    RngStream rng(500 + t);
    ViewResult v = apply(comp, g, rng);
    bool features_zeroed = v.graph.features().cwiseAbs().maxCoeff() == 0.0;
    bool edges_gone = v.graph.num_edges() == 0;
    if (features_zeroed && !edges_gone) ++saw_fm;
    if (edges_gone && !features_zeroed) ++saw_er;
    if (!features_zeroed && !edges_gone) ++saw_id;
    CHECK((static_cast<int>(features_zeroed) + static_cast<int>(edges_gone)) <= 1);
  }
  CHECK(saw_fm > 0);
  CHECK(saw_er > 0);
  CHECK(saw_id > 0);

  Composite bad{{{Scheme::Identity}}, CompositeMode::random_choice, 2};
  RngStream rng(1);
  CHECK_THROWS_AS(apply(bad, g, rng), ConfigError);
}

TEST_CASE("composite survivor maps compose across node-dropping children") {
  auto gs = gen_graph_dataset(3, {GraphFamily::clique}, 5, 5, 47);
  Graph g = batch_graphs(gs);
  Composite comp{{{Scheme::ND, 0.3}, {Scheme::ND, 0.3}},
                 CompositeMode::compose_all, 1};
  RngStream rng(91);
  ViewResult v = apply(comp, g, rng);
  v.graph.validate();
  // surviving originals carry their features through both relabelings
  for (int orig = 0; orig < g.num_nodes(); ++orig) {
    int now = v.node_map[orig];
    if (now == -1) continue;
    CHECK((v.graph.features().row(now) - g.features().row(orig)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("expected edge counts move monotonically with the edge probabilities") {
  Graph g = gen_sbm(10, 2, 0.5, 0.2, 2, 0.0, 51);
  auto mean_edges_er = [&](double p) {
    double total = 0;
    for (int t = 0; t < 400; ++t) {
      RngStream rng(600 + t);
      total += edge_removing(g, p, rng).num_edges();
    }
    return total / 400;
  };
  auto mean_edges_ea = [&](double p) {
    double total = 0;
    for (int t = 0; t < 400; ++t) {
      RngStream rng(600 + t);
      total += edge_adding(g, p, rng).num_edges();
    }
    return total / 400;
  };
  CHECK(mean_edges_er(0.1) > mean_edges_er(0.4));
  CHECK(mean_edges_er(0.4) > mean_edges_er(0.8));
  CHECK(mean_edges_ea(0.1) < mean_edges_ea(0.4));
  CHECK(mean_edges_ea(0.4) < mean_edges_ea(0.8));
}
