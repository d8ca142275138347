// Trial orchestration: dataset materialization, the epoch loop (views,
// encoder, contrast batch, miner, loss, optimizer step, early stop), frozen
// linear-probe evaluation, artifact persistence, and one-axis sweeps.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcl/config.hpp"
#include "gcl/eval.hpp"
#include "gcl/graph.hpp"

namespace gcl {

/// Materialized dataset: one (possibly batched) graph plus probe targets.
/// Multi-graph datasets are evaluated at graph level, so `labels` then holds
/// one label per member graph (taken from its first node); single graphs are
/// node tasks and `labels` is per node.
struct TrialData {
  Graph graph;
  std::vector<int> labels;
  bool graph_task = false;
};

/// Builds the dataset a config names: synthetic generation seeded from the
/// trial seed's "data" substream, or a file load (a root-level "graphs"
/// array is batched into one graph).
TrialData materialize_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct TrialResult {
  std::vector<double> loss_curve;   // one entry per completed epoch
  int best_epoch = -1;              // argmin of loss_curve, -1 when empty
  double mean_view_edges = 0.0;     // mean edge count over views built; NaN when none
  Eigen::MatrixXd embeddings;       // frozen-best embeddings of the unaugmented data
  std::vector<int> labels;          // probe targets (copied from TrialData)
  EvalReport report;
  std::string run_dir;              // artifact directory, "" when disabled
};

/// Output root: $GCL_RUN_DIR when set, else "runs".
std::string run_root();

/// Deterministic artifact directory for a config: <root>/trial-<hash of the
/// serialized config>. Re-running the same config overwrites in place.
std::string default_run_dir(const ExperimentConfig& config,
                            const std::string& root);

/// Runs one trial: per epoch draw a view per branch, encode with the shared
/// encoder, sample the mode's contrast batch, apply the miner, step AdamW,
/// and early-stop on the loss; then restore the best-loss parameters, embed
/// the original graph, and linear-probe it. Artifacts (config.json,
/// loss.csv, checkpoint.bin, embeddings.csv, eval.json) go to `run_dir`;
/// an empty run_dir disables persistence. Errors from any stage are rethrown
/// with the stage name and epoch attached; ConfigError keeps its type.
TrialResult run_trial(const ExperimentConfig& config,
                      const std::string& run_dir);

/// run_trial into default_run_dir(config, run_root()).
TrialResult run_trial(const ExperimentConfig& config);

struct SweepRow {
  std::string value;
  bool ok = false;
  bool config_error = false;    // the failure was a rejected config
  std::string error;            // failure message when !ok
  double mean = 0.0;
  double std_dev = 0.0;
  double mean_view_edges = 0.0;
};

/// One run_trial per value with `axis` overridden on a copy of `base`; the
/// seed and every other field stay fixed. A failed trial records its error
/// and the sweep continues. `root` "" disables artifact persistence.
std::vector<SweepRow> sweep(const ExperimentConfig& base,
                            const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::string& root);

/// CSV with header value,mean,std,mean_edges_in_views; failed rows print nan.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace gcl
