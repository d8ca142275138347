// Command-line front end: synth, augment, train, eval, sweep.
//
// Every subcommand takes --config <json> plus colon-path overrides
// (--encoder:kind gin, --obj:infonce:tau 0.4). Exit codes: 0 success,
// 2 rejected config, 1 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "gcl/augment.hpp"
#include "gcl/config.hpp"
#include "gcl/error.hpp"
#include "gcl/eval.hpp"
#include "gcl/generators.hpp"
#include "gcl/graph.hpp"
#include "gcl/nn.hpp"
#include "gcl/objectives.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"
#include "gcl/trainer.hpp"

namespace {

gcl::ExperimentConfig load_with_overrides(
    const std::string& config_path, const std::vector<std::string>& extras) {
  gcl::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = gcl::load_config(config_path);
  for (const auto& [path, value] : gcl::parse_override_flags(extras))
    gcl::apply_override(cfg, path, value);
  cfg.validate();
  return cfg;
}

int cmd_synth(const gcl::ExperimentConfig& cfg, const std::string& out) {
  gcl::TrialData data =
      gcl::materialize_dataset(cfg.dataset, cfg.optimizer.seed);
  gcl::save_graph(data.graph, out);
  std::printf("wrote %s: %d nodes, %d edges, %d graphs, %d features\n",
              out.c_str(), data.graph.num_nodes(), data.graph.num_edges(),
              data.graph.num_graphs(),
              static_cast<int>(data.graph.features().cols()));
  return 0;
}

int cmd_augment(const gcl::ExperimentConfig& cfg, const std::string& out) {
  gcl::TrialData data =
      gcl::materialize_dataset(cfg.dataset, cfg.optimizer.seed);
  gcl::RngStream root(cfg.optimizer.seed);
  gcl::RngStream stream = root.substream("aug1", 0);
  gcl::ViewResult view = gcl::apply(cfg.augmentor1, data.graph, stream);
  gcl::save_graph(view.graph, out);
  std::printf("wrote %s: view keeps %d/%d nodes, %d/%d edges, %d/%d graphs\n",
              out.c_str(), view.graph.num_nodes(), data.graph.num_nodes(),
              view.graph.num_edges(), data.graph.num_edges(),
              view.graph.num_graphs(), data.graph.num_graphs());
  return 0;
}

int cmd_train(const gcl::ExperimentConfig& cfg, const std::string& run_dir) {
  std::string dir = run_dir.empty()
                        ? gcl::default_run_dir(cfg, gcl::run_root())
                        : run_dir;
  gcl::TrialResult r = gcl::run_trial(cfg, dir);
  if (r.loss_curve.empty())
    std::printf("no training epochs; probing the initial encoder\n");
  else
    std::printf("trained %zu epochs; best epoch %d (loss %.6f)\n",
                r.loss_curve.size(), r.best_epoch,
                r.loss_curve[static_cast<size_t>(r.best_epoch)]);
  std::fputs(gcl::eval_report_table(r.report).c_str(), stdout);
  std::printf("artifacts: %s\n", r.run_dir.c_str());
  return 0;
}

// Re-probes the checkpoint of an existing run directory. The networks are
// rebuilt exactly as training built them, so the checkpoint names line up.
int cmd_eval(const std::string& dir, const std::vector<std::string>& extras) {
  gcl::ExperimentConfig cfg = gcl::load_config(dir + "/config.json");
  for (const auto& [path, value] : gcl::parse_override_flags(extras))
    gcl::apply_override(cfg, path, value);
  cfg.validate();

  gcl::TrialData data =
      gcl::materialize_dataset(cfg.dataset, cfg.optimizer.seed);
  gcl::check_mode_graph_count(cfg.mode, data.graph.num_graphs());
  if (cfg.encoder.input_dim == 0)
    cfg.encoder.input_dim = static_cast<int>(data.graph.features().cols());

  gcl::RngStream root(cfg.optimizer.seed);
  gcl::RngStream init = root.substream("init");
  gcl::Tape t;
  gcl::Tensor h;
  gcl::ParamStore store;
  gcl::Encoder encoder;
  std::optional<gcl::BootstrapNets> nets;
  if (cfg.objective.kind == gcl::Objective::bootstrap) {
    nets.emplace(cfg.encoder, cfg.objective.bn, init);
    gcl::load_checkpoint(nets->online, dir + "/checkpoint.bin");
    h = nets->enc_online.forward(t, data.graph, false);
  } else {
    encoder = gcl::Encoder(store, "enc", cfg.encoder, init);
    bool scored = cfg.objective.kind == gcl::Objective::infonce ||
                  cfg.objective.kind == gcl::Objective::jsd ||
                  cfg.objective.kind == gcl::Objective::sp_jsd;
    gcl::Critic critic;
    if (scored)
      critic = gcl::Critic(store, "critic", cfg.encoder.hidden_dim,
                           cfg.encoder.hidden_dim, false, init);
    gcl::load_checkpoint(store, dir + "/checkpoint.bin");
    h = encoder.forward(t, data.graph, false);
  }

  std::vector<int> gid(data.graph.num_nodes(), 0);
  if (data.graph.graph_id()) gid = *data.graph.graph_id();
  Eigen::MatrixXd emb =
      data.graph_task
          ? gcl::readout(t, h, gid, cfg.readout.kind).val()
          : h.val();
  auto splits = gcl::make_splits(data.labels, cfg.eval.n_splits,
                                 gcl::derive_seed(cfg.optimizer.seed, "probe"));
  gcl::ProbeOptions options;
  options.l2_grid = cfg.eval.l2_grid;
  gcl::EvalReport report =
      gcl::linear_probe(emb, data.labels, splits, options);
  std::fputs(gcl::eval_report_table(report).c_str(), stdout);
  return 0;
}

int cmd_sweep(const gcl::ExperimentConfig& base, const std::string& axis,
              const std::vector<std::string>& values, bool no_artifacts) {
  std::string root = no_artifacts ? "" : gcl::run_root();
  std::vector<gcl::SweepRow> rows = gcl::sweep(base, axis, values, root);
  std::fputs(gcl::sweep_csv(rows).c_str(), stdout);
  bool any_ok = false;
  bool all_config = true;
  for (const gcl::SweepRow& r : rows) {
    if (r.ok) {
      any_ok = true;
    } else {
      std::fprintf(stderr, "value %s failed: %s\n", r.value.c_str(),
                   r.error.c_str());
      if (!r.config_error) all_config = false;
    }
  }
  if (any_ok) return 0;
  return all_config ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph contrastive learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, run_dir, axis;
  std::vector<std::string> values;
  bool no_artifacts = false;

  CLI::App* synth = app.add_subcommand(
      "synth", "generate the config's dataset and write it to a file");
  synth->add_option("--config", config_path, "config JSON");
  synth->add_option("--out", out_path, "output graph file")->required();
  synth->allow_extras();

  CLI::App* augment = app.add_subcommand(
      "augment", "apply augmentor1 once and write the view");
  augment->add_option("--config", config_path, "config JSON");
  augment->add_option("--out", out_path, "output graph file")->required();
  augment->allow_extras();

  CLI::App* train =
      app.add_subcommand("train", "run one trial and probe the result");
  train->add_option("--config", config_path, "config JSON");
  train->add_option("--run-dir", run_dir,
                    "artifact directory (default: $GCL_RUN_DIR or runs/)");
  train->allow_extras();

  CLI::App* eval = app.add_subcommand(
      "eval", "re-probe the checkpoint in an existing run directory");
  eval->add_option("--run-dir", run_dir, "run directory")->required();
  eval->allow_extras();

  CLI::App* sweep =
      app.add_subcommand("sweep", "run one trial per value of one axis");
  sweep->add_option("--config", config_path, "config JSON");
  sweep->add_option("--axis", axis, "colon path to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_flag("--no-artifacts", no_artifacts, "skip run directories");
  sweep->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(load_with_overrides(config_path, synth->remaining()),
                       out_path);
    if (augment->parsed())
      return cmd_augment(
          load_with_overrides(config_path, augment->remaining()), out_path);
    if (train->parsed())
      return cmd_train(load_with_overrides(config_path, train->remaining()),
                       run_dir);
    if (eval->parsed()) return cmd_eval(run_dir, eval->remaining());
    if (sweep->parsed())
      return cmd_sweep(load_with_overrides(config_path, sweep->remaining()),
                       axis, values, no_artifacts);
  } catch (const gcl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
