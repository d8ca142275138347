// Experiment configuration: the JSON-backed record of one trial (dataset,
// two augmentors, encoder, contrasting mode, objective, miner, optimizer,
// evaluation protocol), plus colon-path flag overrides and the cross-field
// compatibility rules enforced before any compute.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gcl/augment.hpp"
#include "gcl/contrast.hpp"
#include "gcl/mining.hpp"
#include "gcl/nn.hpp"
#include "gcl/objectives.hpp"

namespace gcl {

enum class SynthKind { sbm, graphs };

SynthKind parse_synth_kind(const std::string& name);
std::string synth_kind_name(SynthKind k);

/// Where the data comes from: a graph container file when `path` is set,
/// otherwise a synthetic generator. The sbm family yields one node-labeled
/// graph; the graphs family yields a labeled multi-graph dataset.
struct DatasetSpec {
  std::string path;
  SynthKind synth = SynthKind::sbm;
  // sbm
  int n_per_block = 100;
  int n_blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 8;
  double noise_sigma = 0.1;
  // graphs
  int n_graphs = 150;
  std::vector<std::string> classes = {"cycle", "tree", "clique"};
  int size_min = 6;
  int size_max = 12;

  bool is_synth() const { return path.empty(); }
  /// Member-graph count when it is known without touching the filesystem;
  /// -1 for file datasets.
  int known_num_graphs() const;
  void validate() const;
};

struct ReadoutSpec {
  ReadoutKind kind = ReadoutKind::mean;
};

struct OptimizerSpec {
  double lr = 0.01;
  double weight_decay = 1e-5;
  int epochs = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EvalSpec {
  int n_splits = 10;
  std::vector<double> l2_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};

  void validate() const;
};

/// One trial, fully specified. Augmentors are stored as composites; a plain
/// augmentor is a one-child composite and serializes in the flat
/// {"scheme": ...} form.
struct ExperimentConfig {
  DatasetSpec dataset;
  Composite augmentor1;
  Composite augmentor2;
  EncoderSpec encoder;
  ReadoutSpec readout;
  ModeSpec mode;
  ObjectiveSpec objective;
  MinerSpec miner;
  OptimizerSpec optimizer;
  EvalSpec eval;

  ExperimentConfig();

  /// Field-level checks plus every cross-field compatibility rule that does
  /// not require loading the dataset. Throws ConfigError naming the violated
  /// rule.
  void validate() const;
};

/// Compatibility rules that depend on the member-graph count; called by
/// validate() for synthetic datasets and again by the trainer after loading
/// a file dataset.
void check_mode_graph_count(const ModeSpec& mode, int num_graphs);

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

/// Applies one colon-path override, e.g. ("obj:infonce:tau", "0.4") or
/// ("augmentor1:ER:prob", "0.3"). Unknown paths and malformed values throw
/// ConfigError listing the valid keys at the failing level.
void apply_override(ExperimentConfig& config, const std::string& path,
                    const std::string& value);

/// Extracts (path, value) pairs from raw CLI tokens of the forms
/// `--a:b value` and `--a:b=value`.
std::vector<std::pair<std::string, std::string>> parse_override_flags(
    const std::vector<std::string>& args);

}  // namespace gcl
