#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gcl/config.hpp"
#include "gcl/error.hpp"

using namespace gcl;

namespace {

// Message-inspecting throw check: the exception must mention `needle`.
template <typename Fn>
void check_throws_with(Fn&& fn, const std::string& needle) {
  try {
    fn();
    FAIL_CHECK("expected a ConfigError mentioning '" << needle << "'");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    std::string note = "message '" + msg + "' lacks '" + needle + "'";
    CHECK_MESSAGE(msg.find(needle) != std::string::npos, note);
  }
}

ExperimentConfig parse(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

}  // namespace

TEST_CASE("defaults form a valid config with the documented knobs") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.encoder.hidden_dim == 256);
  CHECK(c.encoder.layers == 2);
  CHECK(c.optimizer.lr == 0.01);
  CHECK(c.optimizer.weight_decay == 1e-5);
  CHECK(c.optimizer.epochs == 500);
  CHECK(c.eval.n_splits == 10);
  CHECK(c.eval.l2_grid.size() == 5);
  REQUIRE(c.augmentor1.children.size() == 1);
  CHECK(c.augmentor1.children[0].scheme == Scheme::Identity);
  CHECK(c.mode.mode == Mode::LL);
  CHECK(c.objective.kind == Objective::infonce);
  CHECK(c.miner.kind == Miner::none);
}

TEST_CASE("json round-trip preserves every field") {
  ExperimentConfig c;
  c.dataset.synth = SynthKind::graphs;
  c.dataset.n_graphs = 42;
  c.dataset.classes = {"cycle", "clique"};
  c.dataset.size_min = 4;
  c.dataset.size_max = 9;
  c.augmentor1.children = {Augmentor{Scheme::ER, 0.3},
                           Augmentor{Scheme::FM, 0.4}};
  c.augmentor1.mode = CompositeMode::random_choice;
  c.augmentor1.k = 1;
  c.augmentor2.children = {Augmentor{Scheme::PPR, 0.2, 0.1, 5, 1e-4, 0}};
  c.encoder.kind = EncoderKind::gin;
  c.encoder.layers = 3;
  c.encoder.hidden_dim = 32;
  c.encoder.activation = Activation::relu;
  c.encoder.use_batchnorm = true;
  c.readout.kind = ReadoutKind::sum;
  c.mode.mode = Mode::GG;
  c.mode.branch = Branch::dual;
  c.mode.intra_view_negatives = true;
  c.objective.kind = Objective::triplet;
  c.objective.tau = 0.7;
  c.objective.epsilon = 2.5;
  c.objective.lambda = 0.125;
  c.objective.mu = 10.0;
  c.objective.gamma = 0.5;
  c.objective.ema_decay = 0.9;
  c.objective.bn.projector = true;
  c.miner.kind = Miner::hnm;
  c.miner.s = 2;
  c.miner.k = 5;
  c.optimizer.lr = 0.005;
  c.optimizer.weight_decay = 0.0;
  c.optimizer.epochs = 13;
  c.optimizer.seed = 99;
  c.eval.n_splits = 3;
  c.eval.l2_grid = {0.01, 0.1};

  ExperimentConfig back = config_from_json(config_to_json(c));

  CHECK(back.dataset.synth == SynthKind::graphs);
  CHECK(back.dataset.n_graphs == 42);
  CHECK(back.dataset.classes == c.dataset.classes);
  CHECK(back.dataset.size_min == 4);
  CHECK(back.dataset.size_max == 9);
  REQUIRE(back.augmentor1.children.size() == 2);
  CHECK(back.augmentor1.children[0].scheme == Scheme::ER);
  CHECK(back.augmentor1.children[0].prob == 0.3);
  CHECK(back.augmentor1.children[1].scheme == Scheme::FM);
  CHECK(back.augmentor1.mode == CompositeMode::random_choice);
  CHECK(back.augmentor1.k == 1);
  REQUIRE(back.augmentor2.children.size() == 1);
  CHECK(back.augmentor2.children[0].scheme == Scheme::PPR);
  CHECK(back.augmentor2.children[0].alpha == 0.1);
  CHECK(back.augmentor2.children[0].k_steps == 5);
  CHECK(back.augmentor2.children[0].eps_threshold == 1e-4);
  CHECK(back.encoder.kind == EncoderKind::gin);
  CHECK(back.encoder.layers == 3);
  CHECK(back.encoder.hidden_dim == 32);
  CHECK(back.encoder.activation == Activation::relu);
  CHECK(back.encoder.use_batchnorm == true);
  CHECK(back.readout.kind == ReadoutKind::sum);
  CHECK(back.mode.mode == Mode::GG);
  CHECK(back.mode.intra_view_negatives == true);
  CHECK(back.objective.kind == Objective::triplet);
  CHECK(back.objective.tau == 0.7);
  CHECK(back.objective.epsilon == 2.5);
  REQUIRE(back.objective.lambda.has_value());
  CHECK(*back.objective.lambda == 0.125);
  CHECK(back.objective.mu == 10.0);
  CHECK(back.objective.gamma == 0.5);
  CHECK(back.objective.ema_decay == 0.9);
  CHECK(back.objective.bn.projector == true);
  CHECK(back.miner.kind == Miner::hnm);
  CHECK(back.miner.s == 2);
  CHECK(back.miner.k == 5);
  CHECK(back.optimizer.lr == 0.005);
  CHECK(back.optimizer.weight_decay == 0.0);
  CHECK(back.optimizer.epochs == 13);
  CHECK(back.optimizer.seed == 99);
  CHECK(back.eval.n_splits == 3);
  CHECK(back.eval.l2_grid == c.eval.l2_grid);

  // Serializing the parsed copy again yields the identical document.
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("an unset lambda survives the round-trip as null") {
  ExperimentConfig c;
  nlohmann::json j = config_to_json(c);
  CHECK(j["objective"]["lambda"].is_null());
  ExperimentConfig back = config_from_json(j);
  CHECK(!back.objective.lambda.has_value());
}

TEST_CASE("partial documents fill the remaining fields with defaults") {
  ExperimentConfig c = parse(R"({"objective": {"loss": "jsd"}})");
  CHECK(c.objective.kind == Objective::jsd);
  CHECK(c.objective.tau == 0.5);
  CHECK(c.encoder.hidden_dim == 256);
  CHECK(c.dataset.synth == SynthKind::sbm);

  ExperimentConfig empty = parse("{}");
  CHECK_NOTHROW(empty.validate());
}

TEST_CASE("schema violations are rejected with the valid keys listed") {
  check_throws_with([] { parse(R"({"objectve": {}})"); }, "dataset");
  check_throws_with([] { parse(R"({"objectve": {}})"); }, "objectve");
  check_throws_with([] { parse(R"({"objective": {"tua": 0.5}})"); }, "tau");
  check_throws_with([] { parse(R"({"mode": {"mode": "XX"}})"); }, "XX");
  check_throws_with([] { parse(R"({"encoder": {"layers": "two"}})"); },
                    "wrong type");
  check_throws_with(
      [] { parse(R"({"dataset": {"synth": "sbm", "n_graphs": 3}})"); },
      "n_graphs");
  check_throws_with([] { parse(R"({"augmentor1": {"prob": 0.2}})"); },
                    "scheme");
  check_throws_with([] { parse(R"({"miner": {"kind": "XYZ"}})"); }, "XYZ");
}

TEST_CASE("file datasets carry only their path") {
  ExperimentConfig c = parse(R"({"dataset": {"path": "data/g.json"}})");
  CHECK(!c.dataset.is_synth());
  CHECK(c.dataset.known_num_graphs() == -1);
  nlohmann::json j = config_to_json(c);
  CHECK(j["dataset"] == nlohmann::json{{"path", "data/g.json"}});
  check_throws_with(
      [] { parse(R"({"dataset": {"path": "a.json", "p_in": 0.5}})"); },
      "p_in");
}

TEST_CASE("config files round-trip through the filesystem") {
  ExperimentConfig c;
  c.objective.tau = 0.35;
  c.optimizer.seed = 7;
  std::string path = "test_config_roundtrip.json";
  save_config(c, path);
  ExperimentConfig back = load_config(path);
  CHECK(back.objective.tau == 0.35);
  CHECK(back.optimizer.seed == 7);
  CHECK(config_to_json(back) == config_to_json(c));
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_config("definitely_missing.json"), ConfigError);
  std::ofstream bad("test_config_bad.json");
  bad << "{not json";
  bad.close();
  CHECK_THROWS_AS(load_config("test_config_bad.json"), ConfigError);
  std::remove("test_config_bad.json");
}

TEST_CASE("colon-path overrides hit the documented fields") {
  ExperimentConfig c;

  apply_override(c, "obj:infonce:tau", "0.4");
  CHECK(c.objective.tau == 0.4);

  apply_override(c, "augmentor1:scheme", "ER");
  apply_override(c, "augmentor1:ER:prob", "0.3");
  CHECK(c.augmentor1.children[0].scheme == Scheme::ER);
  CHECK(c.augmentor1.children[0].prob == 0.3);

  apply_override(c, "objective:loss", "vicreg");
  CHECK(c.objective.kind == Objective::vicreg);
  apply_override(c, "obj:mu", "12.5");
  CHECK(c.objective.mu == 12.5);
  apply_override(c, "obj:bn:projector", "true");
  CHECK(c.objective.bn.projector);

  apply_override(c, "mode:mode", "GG");
  CHECK(c.mode.mode == Mode::GG);
  apply_override(c, "mode:intra_view_negatives", "true");
  CHECK(c.mode.intra_view_negatives);

  apply_override(c, "encoder:kind", "gin");
  apply_override(c, "encoder:hidden_dim", "64");
  CHECK(c.encoder.kind == EncoderKind::gin);
  CHECK(c.encoder.hidden_dim == 64);

  apply_override(c, "readout:kind", "sum");
  CHECK(c.readout.kind == ReadoutKind::sum);

  apply_override(c, "miner:kind", "CNS");
  apply_override(c, "miner:u", "80");
  CHECK(c.miner.kind == Miner::cns);
  CHECK(c.miner.u == 80.0);

  apply_override(c, "optimizer:lr", "0.003");
  apply_override(c, "optimizer:seed", "123");
  CHECK(c.optimizer.lr == 0.003);
  CHECK(c.optimizer.seed == 123);

  apply_override(c, "eval:n_splits", "4");
  CHECK(c.eval.n_splits == 4);

  apply_override(c, "dataset:p_in", "0.25");
  CHECK(c.dataset.p_in == 0.25);
  apply_override(c, "dataset:synth", "graphs");
  apply_override(c, "dataset:n_graphs", "60");
  CHECK(c.dataset.synth == SynthKind::graphs);
  CHECK(c.dataset.n_graphs == 60);
}

TEST_CASE("scheme-scoped overrides address the matching composite child") {
  ExperimentConfig c;
  c.augmentor1.children = {Augmentor{Scheme::ER, 0.2},
                           Augmentor{Scheme::FM, 0.2}};
  apply_override(c, "augmentor1:FM:prob", "0.45");
  CHECK(c.augmentor1.children[1].prob == 0.45);
  CHECK(c.augmentor1.children[0].prob == 0.2);

  // Bare fields are ambiguous on a multi-child composite.
  check_throws_with([&] { apply_override(c, "augmentor1:prob", "0.5"); },
                    "composite");
  // Asking for an absent scheme names the present ones.
  check_throws_with([&] { apply_override(c, "augmentor1:ND:prob", "0.5"); },
                    "ER, FM");
  // Duplicated schemes cannot be addressed this way.
  c.augmentor1.children = {Augmentor{Scheme::ER, 0.1},
                           Augmentor{Scheme::ER, 0.9}};
  check_throws_with([&] { apply_override(c, "augmentor1:ER:prob", "0.5"); },
                    "ambiguous");
}

TEST_CASE("scoped objective overrides assert the configured loss") {
  ExperimentConfig c;  // infonce by default
  check_throws_with([&] { apply_override(c, "obj:jsd:tau", "0.4"); },
                    "infonce");
  apply_override(c, "obj:loss", "jsd");
  CHECK_NOTHROW(apply_override(c, "obj:jsd:tau", "0.4"));
  CHECK(c.objective.tau == 0.4);
}

TEST_CASE("bad override paths and values list the valid keys") {
  ExperimentConfig c;
  check_throws_with([&] { apply_override(c, "nosuch:lr", "1"); },
                    "valid sections");
  check_throws_with([&] { apply_override(c, "optimizer:rl", "1"); },
                    "lr, weight_decay, epochs, seed");
  check_throws_with([&] { apply_override(c, "optimizer", "1"); },
                    "needs a field");
  check_throws_with([&] { apply_override(c, "obj:tau", "fast"); },
                    "expects a number");
  check_throws_with([&] { apply_override(c, "encoder:layers", "2.5"); },
                    "expects an integer");
  check_throws_with([&] { apply_override(c, "optimizer:seed", "-3"); },
                    "non-negative");
  check_throws_with(
      [&] { apply_override(c, "mode:intra_view_negatives", "maybe"); },
      "true or false");
  check_throws_with([&] { apply_override(c, "eval:l2_grid", "0.1"); },
                    "list-valued");
  check_throws_with([&] { apply_override(c, "augmentor1:junk", "1"); },
                    "valid keys");
  check_throws_with([&] { apply_override(c, "obj::tau", "1"); },
                    "empty segment");
  // A probability out of range parses but fails validation.
  apply_override(c, "augmentor1:prob", "1.5");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("dataset overrides respect the active source") {
  ExperimentConfig c;
  apply_override(c, "dataset:path", "some.json");
  check_throws_with([&] { apply_override(c, "dataset:p_in", "0.5"); },
                    "file-backed");
  apply_override(c, "dataset:synth", "sbm");
  CHECK(c.dataset.is_synth());
  CHECK_NOTHROW(apply_override(c, "dataset:p_in", "0.5"));
  check_throws_with([&] { apply_override(c, "dataset:n_graphs", "5"); },
                    "sbm");
}

TEST_CASE("flag tokens parse into ordered path/value pairs") {
  auto pairs = parse_override_flags(
      {"--obj:infonce:tau", "0.4", "--augmentor1:ER:prob=0.3",
       "--optimizer:lr", "-0.5"});
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].first == "obj:infonce:tau");
  CHECK(pairs[0].second == "0.4");
  CHECK(pairs[1].first == "augmentor1:ER:prob");
  CHECK(pairs[1].second == "0.3");
  CHECK(pairs[2].second == "-0.5");

  CHECK_THROWS_AS(parse_override_flags({"obj:tau", "0.4"}), ConfigError);
  CHECK_THROWS_AS(parse_override_flags({"--obj:tau"}), ConfigError);
  CHECK_THROWS_AS(parse_override_flags({"--obj:tau", "--mode:mode", "LL"}),
                  ConfigError);
}

TEST_CASE("the compatibility truth table rejects each forbidden pair") {
  // Rows: (mutation, expected rule name, expected to be rejected). Valid
  // neighbors assert the rules do not overfire.
  struct Row {
    std::string name;
    std::function<void(ExperimentConfig&)> mutate;
    std::string rule;  // empty = must validate
  };
  auto multi_graph = [](ExperimentConfig& c) {
    c.dataset.synth = SynthKind::graphs;
  };
  std::vector<Row> rows = {
      {"BT x GL",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::barlow_twins;
         c.mode.mode = Mode::GL;
         multi_graph(c);
       },
       "same-scale-covariance"},
      {"VICReg x GL",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::vicreg;
         c.mode.mode = Mode::GL;
         multi_graph(c);
       },
       "same-scale-covariance"},
      {"BT x LL is fine",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::barlow_twins;
       },
       ""},
      {"GG x single-graph dataset",
       [&](ExperimentConfig& c) { c.mode.mode = Mode::GG; },
       "global-global-multi-graph"},
      {"GG x multi-graph is fine",
       [&](ExperimentConfig& c) {
         c.mode.mode = Mode::GG;
         multi_graph(c);
       },
       ""},
      {"GL dual x single-graph dataset",
       [&](ExperimentConfig& c) { c.mode.mode = Mode::GL; },
       "cross-scale-negatives"},
      {"GL single x single-graph is fine",
       [&](ExperimentConfig& c) {
         c.mode.mode = Mode::GL;
         c.mode.branch = Branch::single;
       },
       ""},
      {"BL x single-branch",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::bootstrap;
         c.mode.mode = Mode::GL;
         c.mode.branch = Branch::single;
       },
       "bootstrap-dual-branch"},
      {"BL x dual LL is fine",
       [&](ExperimentConfig& c) { c.objective.kind = Objective::bootstrap; },
       ""},
      {"single branch x LL",
       [&](ExperimentConfig& c) { c.mode.branch = Branch::single; },
       "single-branch-global-local"},
      {"single branch x GG",
       [&](ExperimentConfig& c) {
         c.mode.mode = Mode::GG;
         c.mode.branch = Branch::single;
         multi_graph(c);
       },
       "single-branch-global-local"},
      {"intra-view negatives x GL",
       [&](ExperimentConfig& c) {
         c.mode.mode = Mode::GL;
         c.mode.branch = Branch::single;
         c.mode.intra_view_negatives = true;
       },
       "intra-view-same-scale"},
      {"miner x BL",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::bootstrap;
         c.miner.kind = Miner::dcl;
       },
       "miner-needs-negatives"},
      {"miner x BT",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::barlow_twins;
         c.miner.kind = Miner::hnm;
       },
       "miner-needs-negatives"},
      {"miner x VICReg",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::vicreg;
         c.miner.kind = Miner::cns;
       },
       "miner-needs-negatives"},
      {"DCL x jsd",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::jsd;
         c.miner.kind = Miner::dcl;
       },
       "estimator-family"},
      {"HBNM x triplet",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::triplet;
         c.miner.kind = Miner::hbnm;
       },
       "estimator-family"},
      {"HNM x triplet is fine",
       [&](ExperimentConfig& c) {
         c.objective.kind = Objective::triplet;
         c.miner.kind = Miner::hnm;
       },
       ""},
      {"DCL x infonce is fine",
       [&](ExperimentConfig& c) { c.miner.kind = Miner::dcl; },
       ""},
  };

  for (const Row& row : rows) {
    CAPTURE(row.name);
    ExperimentConfig c;
    row.mutate(c);
    if (row.rule.empty()) {
      CHECK_NOTHROW(c.validate());
    } else {
      check_throws_with([&] { c.validate(); }, "config rule " + row.rule);
    }
  }
}

TEST_CASE("graph-count rules re-fire when a file dataset turns out small") {
  ModeSpec gg;
  gg.mode = Mode::GG;
  check_throws_with([&] { check_mode_graph_count(gg, 1); },
                    "global-global-multi-graph");
  CHECK_NOTHROW(check_mode_graph_count(gg, 2));
  ModeSpec gl;
  gl.mode = Mode::GL;
  check_throws_with([&] { check_mode_graph_count(gl, 1); },
                    "cross-scale-negatives");
  gl.branch = Branch::single;
  CHECK_NOTHROW(check_mode_graph_count(gl, 1));
  CHECK_THROWS_AS(check_mode_graph_count(gl, 0), ValidationError);
}
