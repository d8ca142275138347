#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gcl/augment.hpp"
#include "gcl/config.hpp"
#include "gcl/error.hpp"
#include "gcl/generators.hpp"
#include "gcl/graph.hpp"
#include "gcl/trainer.hpp"

using namespace gcl;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// 100-node two-block community graph, kept small enough for fast epochs but
// large enough that a 10% probe training draw holds both classes.
ExperimentConfig node_base() {
  ExperimentConfig c;
  c.dataset.n_per_block = 50;
  c.dataset.n_blocks = 2;
  c.dataset.p_in = 0.3;
  c.dataset.p_out = 0.05;
  c.dataset.feature_dim = 6;
  c.dataset.noise_sigma = 0.1;
  c.encoder.hidden_dim = 8;
  c.optimizer.epochs = 2;
  c.optimizer.seed = 7;
  c.eval.n_splits = 2;
  c.eval.l2_grid = {1e-2};
  return c;
}

ExperimentConfig graph_base() {
  ExperimentConfig c;
  c.dataset.synth = SynthKind::graphs;
  c.dataset.n_graphs = 60;
  c.dataset.size_min = 4;
  c.dataset.size_max = 7;
  c.encoder.hidden_dim = 8;
  c.mode.mode = Mode::GG;
  c.optimizer.epochs = 2;
  c.optimizer.seed = 9;
  c.eval.n_splits = 2;
  c.eval.l2_grid = {1e-2};
  return c;
}

void set_aug(Composite& a, Scheme s, double prob) {
  a.children = {Augmentor{}};
  a.children[0].scheme = s;
  a.children[0].prob = prob;
}

// Shared integration checks: curve length, finiteness, best-epoch bookkeeping,
// and a sane report.
TrialResult smoke(const ExperimentConfig& c) {
  TrialResult r = run_trial(c, "");
  CHECK(r.loss_curve.size() <= static_cast<size_t>(c.optimizer.epochs));
  for (double v : r.loss_curve) CHECK(std::isfinite(v));
  if (!r.loss_curve.empty()) {
    int argmin = 0;
    for (int i = 1; i < static_cast<int>(r.loss_curve.size()); ++i)
      if (r.loss_curve[i] < r.loss_curve[argmin]) argmin = i;
    CHECK(r.best_epoch == argmin);
  }
  CHECK(r.report.per_split.size() == static_cast<size_t>(c.eval.n_splits));
  CHECK(r.report.mean >= 0.0);
  CHECK(r.report.mean <= 1.0);
  return r;
}

}  // namespace

TEST_CASE("synthetic datasets materialize with the right task shape") {
  ExperimentConfig nc = node_base();
  TrialData nd = materialize_dataset(nc.dataset, 3);
  CHECK(nd.graph.num_nodes() == 100);
  CHECK(nd.graph.num_graphs() == 1);
  CHECK_FALSE(nd.graph_task);
  CHECK(nd.labels.size() == 100);
  CHECK(nd.labels[0] == 0);
  CHECK(nd.labels[99] == 1);

  ExperimentConfig gc = graph_base();
  TrialData gd = materialize_dataset(gc.dataset, 3);
  CHECK(gd.graph.num_graphs() == 60);
  CHECK(gd.graph_task);
  CHECK(gd.labels.size() == 60);
  // Member classes cycle through the family list.
  CHECK(gd.labels[0] == 0);
  CHECK(gd.labels[1] == 1);
  CHECK(gd.labels[2] == 2);
  CHECK(gd.labels[4] == 1);

  // Same seed, same data, bitwise.
  TrialData nd2 = materialize_dataset(nc.dataset, 3);
  CHECK(nd.graph.features() == nd2.graph.features());
  CHECK(nd.graph.num_edges() == nd2.graph.num_edges());
}

TEST_CASE("file datasets load by root shape") {
  std::string single = tmp_path("gcl_trainer_single.json");
  save_graph(gen_sbm(10, 2, 0.4, 0.1, 4, 0.1, 5), single);
  DatasetSpec spec;
  spec.path = single;
  TrialData d = materialize_dataset(spec, 1);
  CHECK(d.graph.num_nodes() == 20);
  CHECK_FALSE(d.graph_task);

  std::string multi = tmp_path("gcl_trainer_multi.json");
  auto graphs = gen_graph_dataset(
      12, {GraphFamily::cycle, GraphFamily::clique}, 4, 6, 11);
  save_graphs(graphs, multi);
  spec.path = multi;
  TrialData md = materialize_dataset(spec, 1);
  CHECK(md.graph.num_graphs() == 12);
  CHECK(md.graph_task);
  CHECK(md.labels.size() == 12);

  spec.path = tmp_path("gcl_trainer_missing.json");
  CHECK_THROWS_AS(materialize_dataset(spec, 1), ParseError);
}

TEST_CASE("a zero-epoch bootstrap trial probes random embeddings") {
  ExperimentConfig c = node_base();
  c.objective.kind = Objective::bootstrap;
  c.objective.ema_decay = 0.0;
  c.optimizer.epochs = 0;

  TrialResult r = run_trial(c, "");
  CHECK(r.loss_curve.empty());
  CHECK(r.best_epoch == -1);
  CHECK(std::isnan(r.mean_view_edges));
  CHECK(r.embeddings.rows() == 100);
  CHECK(r.embeddings.cols() == 8);
  CHECK(r.report.per_split.size() == 2);
}

TEST_CASE("local-local objectives run end to end") {
  ExperimentConfig c = node_base();
  set_aug(c.augmentor1, Scheme::ER, 0.3);
  set_aug(c.augmentor2, Scheme::FM, 0.3);

  SUBCASE("infonce") { smoke(c); }
  SUBCASE("infonce with intra-view negatives") {
    c.mode.intra_view_negatives = true;
    smoke(c);
  }
  SUBCASE("jsd under node dropping") {
    set_aug(c.augmentor1, Scheme::ND, 0.3);
    c.objective.kind = Objective::jsd;
    smoke(c);
  }
  SUBCASE("sp_jsd") {
    c.objective.kind = Objective::sp_jsd;
    smoke(c);
  }
  SUBCASE("triplet") {
    c.objective.kind = Objective::triplet;
    smoke(c);
  }
  SUBCASE("barlow twins on aligned survivors") {
    set_aug(c.augmentor1, Scheme::ND, 0.3);
    c.objective.kind = Objective::barlow_twins;
    smoke(c);
  }
  SUBCASE("vicreg") {
    c.objective.kind = Objective::vicreg;
    smoke(c);
  }
  SUBCASE("bootstrap") {
    c.objective.kind = Objective::bootstrap;
    smoke(c);
  }
}

TEST_CASE("miners compose with the local-local batch") {
  ExperimentConfig c = node_base();
  set_aug(c.augmentor1, Scheme::ER, 0.3);
  set_aug(c.augmentor2, Scheme::FM, 0.3);

  SUBCASE("dcl") { c.miner.kind = Miner::dcl; smoke(c); }
  SUBCASE("hbnm") { c.miner.kind = Miner::hbnm; smoke(c); }
  SUBCASE("hnm") { c.miner.kind = Miner::hnm; smoke(c); }
  SUBCASE("hnm under triplet") {
    c.objective.kind = Objective::triplet;
    c.miner.kind = Miner::hnm;
    smoke(c);
  }
  SUBCASE("cns") {
    c.miner.kind = Miner::cns;
    c.miner.l = 0.0;
    c.miner.u = 50.0;
    smoke(c);
  }
}

TEST_CASE("graph-scale modes run end to end") {
  ExperimentConfig c = graph_base();
  set_aug(c.augmentor1, Scheme::ND, 0.2);
  set_aug(c.augmentor2, Scheme::FM, 0.2);

  SUBCASE("global-global infonce") {
    TrialResult r = smoke(c);
    CHECK(r.embeddings.rows() == 60);
  }
  SUBCASE("global-global vicreg") {
    c.objective.kind = Objective::vicreg;
    smoke(c);
  }
  SUBCASE("global-local dual infonce") {
    c.mode.mode = Mode::GL;
    TrialResult r = smoke(c);
    // Graph task regardless of training scale.
    CHECK(r.embeddings.rows() == 60);
  }
  SUBCASE("global-local single branch corruption") {
    ExperimentConfig s = node_base();
    s.mode.mode = Mode::GL;
    s.mode.branch = Branch::single;
    set_aug(s.augmentor1, Scheme::ER, 0.2);
    smoke(s);
  }
  SUBCASE("bootstrap global-global") {
    c.objective.kind = Objective::bootstrap;
    smoke(c);
  }
  SUBCASE("bootstrap global-local") {
    c.mode.mode = Mode::GL;
    c.objective.kind = Objective::bootstrap;
    smoke(c);
  }
}

TEST_CASE("loss curves and reports are bitwise deterministic") {
  ExperimentConfig c = node_base();
  c.augmentor1.children = {Augmentor{}, Augmentor{}};
  c.augmentor1.children[0].scheme = Scheme::ER;
  c.augmentor1.children[0].prob = 0.3;
  c.augmentor1.children[1].scheme = Scheme::FM;
  c.augmentor1.children[1].prob = 0.3;
  set_aug(c.augmentor2, Scheme::ER, 0.3);
  c.optimizer.epochs = 4;

  TrialResult a = run_trial(c, "");
  TrialResult b = run_trial(c, "");
  REQUIRE(a.loss_curve.size() == b.loss_curve.size());
  for (size_t i = 0; i < a.loss_curve.size(); ++i)
    CHECK(a.loss_curve[i] == b.loss_curve[i]);
  CHECK(a.report.per_split == b.report.per_split);
  CHECK(a.report.mean == b.report.mean);
  CHECK(a.embeddings == b.embeddings);

  // A different seed actually changes the run.
  ExperimentConfig c2 = c;
  c2.optimizer.seed = 8;
  TrialResult d = run_trial(c2, "");
  bool same = a.loss_curve == d.loss_curve;
  CHECK_FALSE(same);
}

TEST_CASE("a saved resolved config reproduces the run") {
  std::string dir = tmp_path("gcl_trainer_artifacts");
  std::filesystem::remove_all(dir);

  ExperimentConfig c = node_base();
  set_aug(c.augmentor1, Scheme::ER, 0.3);
  set_aug(c.augmentor2, Scheme::FM, 0.3);
  c.optimizer.epochs = 3;

  TrialResult r = run_trial(c, dir);
  CHECK(r.run_dir == dir);
  for (const char* name : {"config.json", "loss.csv", "checkpoint.bin",
                           "checkpoint.bin.json", "embeddings.csv",
                           "eval.json"})
    CHECK_MESSAGE(std::filesystem::exists(dir + "/" + name), name);

  std::ifstream loss(dir + "/loss.csv");
  int lines = 0;
  std::string line;
  while (std::getline(loss, line)) ++lines;
  CHECK(lines == 4);  // header + one row per epoch

  ExperimentConfig saved = load_config(dir + "/config.json");
  TrialResult again = run_trial(saved, "");
  REQUIRE(again.loss_curve.size() == r.loss_curve.size());
  for (size_t i = 0; i < r.loss_curve.size(); ++i)
    CHECK(again.loss_curve[i] == r.loss_curve[i]);
  CHECK(again.report.per_split == r.report.per_split);
}

TEST_CASE("mean view edge accounting") {
  ExperimentConfig c = node_base();

  TrialData d = materialize_dataset(c.dataset, c.optimizer.seed);
  double full = d.graph.num_edges();

  // Identity views keep every edge, so the mean is exact.
  TrialResult r = run_trial(c, "");
  CHECK(r.mean_view_edges == full);

  // Removing edges from one view pulls the two-view mean down.
  set_aug(c.augmentor1, Scheme::ER, 0.9);
  TrialResult sparse = run_trial(c, "");
  CHECK(sparse.mean_view_edges < 0.7 * full);
  CHECK(sparse.mean_view_edges > 0.3 * full);  // identity view still counted
}

TEST_CASE("training halts when the loss stops improving") {
  ExperimentConfig c = node_base();
  c.optimizer.epochs = 60;
  c.optimizer.lr = 1e-300;  // updates round away, so the loss never moves
  c.optimizer.weight_decay = 0.0;

  TrialResult r = run_trial(c, "");
  // Best at the first epoch, then a full patience window with no progress.
  CHECK(r.loss_curve.size() == 51);
  CHECK(r.best_epoch == 0);
  for (double v : r.loss_curve) CHECK(v == r.loss_curve[0]);
}

TEST_CASE("errors carry the stage name") {
  ExperimentConfig c = node_base();
  c.dataset.path = tmp_path("gcl_trainer_nowhere.json");
  try {
    run_trial(c, "");
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage load") != std::string::npos);
  }

  // A file dataset with one graph cannot serve graph-graph contrast; the
  // rule fires after loading and keeps its config type (exit code 2).
  std::string single = tmp_path("gcl_trainer_gg_single.json");
  save_graph(gen_sbm(10, 2, 0.4, 0.1, 4, 0.1, 5), single);
  ExperimentConfig gg = node_base();
  gg.dataset.path = single;
  gg.mode.mode = Mode::GG;
  try {
    run_trial(gg, "");
    FAIL("expected a graph-count rule rejection");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("stage load") != std::string::npos);
    CHECK(msg.find("config rule global-global-multi-graph") !=
          std::string::npos);
  }

  ExperimentConfig dim = node_base();
  dim.encoder.input_dim = 5;  // dataset features have 6 columns
  try {
    run_trial(dim, "");
    FAIL("expected an input_dim mismatch");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("stage setup") != std::string::npos);
  }
}

TEST_CASE("sweep varies one axis and records failures") {
  ExperimentConfig base = node_base();
  set_aug(base.augmentor1, Scheme::ER, 0.5);

  SUBCASE("edge counts fall as the removal probability rises") {
    auto rows = sweep(base, "augmentor1:ER:prob", {"0", "0.5", "0.99"}, "");
    REQUIRE(rows.size() == 3);
    for (const SweepRow& r : rows) CHECK(r.ok);
    CHECK(rows[0].mean_view_edges > rows[1].mean_view_edges);
    CHECK(rows[1].mean_view_edges > rows[2].mean_view_edges);
  }

  SUBCASE("a failing value is recorded and the sweep continues") {
    auto rows = sweep(base, "augmentor1:ER:prob", {"1.5", "0.3"}, "");
    REQUIRE(rows.size() == 2);
    CHECK_FALSE(rows[0].ok);
    CHECK(rows[0].error.find("prob") != std::string::npos);
    CHECK(rows[1].ok);
  }

  SUBCASE("an unknown axis fails every row but still returns a table") {
    auto rows = sweep(base, "optimizer:momentum", {"0.9"}, "");
    REQUIRE(rows.size() == 1);
    CHECK_FALSE(rows[0].ok);
    CHECK(rows[0].error.find("valid keys") != std::string::npos);
  }
}

TEST_CASE("a temperature sweep completes every trial") {
  ExperimentConfig base = node_base();
  set_aug(base.augmentor1, Scheme::ER, 0.3);
  set_aug(base.augmentor2, Scheme::FM, 0.3);
  base.optimizer.epochs = 1;

  std::vector<std::string> taus;
  for (int i = 1; i <= 9; ++i) taus.push_back("0." + std::to_string(i));
  auto rows = sweep(base, "obj:infonce:tau", taus, "");
  REQUIRE(rows.size() == 9);
  for (const SweepRow& r : rows) CHECK(r.ok);
}

TEST_CASE("a single-value sweep equals the plain trial") {
  ExperimentConfig base = node_base();
  set_aug(base.augmentor1, Scheme::ER, 0.5);

  auto rows = sweep(base, "augmentor1:ER:prob", {"0.3"}, "");
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].ok);

  ExperimentConfig direct = base;
  apply_override(direct, "augmentor1:ER:prob", "0.3");
  TrialResult r = run_trial(direct, "");
  CHECK(rows[0].mean == r.report.mean);
  CHECK(rows[0].std_dev == r.report.std_dev);
  CHECK(rows[0].mean_view_edges == r.mean_view_edges);
}

TEST_CASE("sweep csv formats ok and failed rows") {
  std::vector<SweepRow> rows(2);
  rows[0].value = "0.1";
  rows[0].ok = true;
  rows[0].mean = 0.75;
  rows[0].std_dev = 0.05;
  rows[0].mean_view_edges = 42.5;
  rows[1].value = "0.9";
  rows[1].error = "boom";

  std::string csv = sweep_csv(rows);
  CHECK(csv.find("value,mean,std,mean_edges_in_views\n") == 0);
  CHECK(csv.find("0.1,0.75,0.05,42.5\n") != std::string::npos);
  CHECK(csv.find("0.9,nan,nan,nan\n") != std::string::npos);
}

TEST_CASE("the run root honors the environment override") {
  setenv("GCL_RUN_DIR", "/tmp/gcl_root_test", 1);
  CHECK(run_root() == "/tmp/gcl_root_test");
  unsetenv("GCL_RUN_DIR");
  CHECK(run_root() == "runs");

  ExperimentConfig c = node_base();
  std::string dir = default_run_dir(c, "out");
  CHECK(dir.rfind("out/trial-", 0) == 0);
  // The name is a pure function of the config.
  CHECK(default_run_dir(c, "out") == dir);
  c.optimizer.seed = 123;
  CHECK(default_run_dir(c, "out") != dir);
}
