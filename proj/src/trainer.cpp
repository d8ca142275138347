// Trial engine. One random stream per randomness source, derived from the
// trial seed by name, so changing one experiment dimension never perturbs
// another's draws.

#include "gcl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "gcl/augment.hpp"
#include "gcl/contrast.hpp"
#include "gcl/error.hpp"
#include "gcl/generators.hpp"
#include "gcl/mining.hpp"
#include "gcl/nn.hpp"
#include "gcl/objectives.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {
namespace {

using nlohmann::json;

std::string stage_tag(const char* stage, int epoch) {
  std::ostringstream os;
  os << "stage " << stage;
  if (epoch >= 0) os << " (epoch " << epoch << ")";
  os << ": ";
  return os.str();
}

// Runs one pipeline stage; anything thrown is re-raised with the stage name
// and epoch attached. ConfigError keeps its type so the CLI still exits 2.
template <typename Fn>
auto staged(const char* stage, int epoch, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(stage_tag(stage, epoch) + e.what());
  } catch (const std::exception& e) {
    throw Error(stage_tag(stage, epoch) + e.what());
  }
}

std::vector<int> node_gid(const Graph& g) {
  if (g.graph_id()) return *g.graph_id();
  return std::vector<int>(g.num_nodes(), 0);
}

// Originals alive in both views, as paired row indices into u and v.
std::pair<std::vector<int>, std::vector<int>> aligned_rows(
    const std::vector<int>& map1, const std::vector<int>& map2) {
  std::pair<std::vector<int>, std::vector<int>> rows;
  for (std::size_t i = 0; i < map1.size(); ++i) {
    if (map1[i] >= 0 && map2[i] >= 0) {
      rows.first.push_back(map1[i]);
      rows.second.push_back(map2[i]);
    }
  }
  return rows;
}

std::vector<int> graph_level_labels(const Graph& g) {
  const std::vector<int>& nl = *g.labels();
  const std::vector<int> gid = node_gid(g);
  std::vector<int> out(g.num_graphs(), -1);
  std::vector<char> seen(out.size(), 0);
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (!seen[gid[i]]) {
      out[gid[i]] = nl[i];
      seen[gid[i]] = 1;
    }
  }
  return out;
}

bool score_based(Objective o) {
  return o == Objective::infonce || o == Objective::jsd ||
         o == Objective::sp_jsd;
}

bool covariance_based(Objective o) {
  return o == Objective::barlow_twins || o == Objective::vicreg;
}

// Miner then loss for one anchor/candidate batch. The estimator-replacing
// miners bypass the objective switch entirely; config validation guarantees
// the objective is infonce for those.
Tensor batch_objective(Tape& t, const ContrastBatch& b, const Critic& critic,
                       const ObjectiveSpec& obj, const MinerSpec& miner,
                       RngStream& miner_rng) {
  if (miner.kind == Miner::dcl)
    return debiased_infonce(t, b, critic, obj.tau, miner.tau_plus, true);
  if (miner.kind == Miner::hbnm)
    return hardness_infonce(t, b, critic, obj.tau, miner.tau_plus, miner.beta,
                            true);
  ContrastBatch mined = b;
  if (miner.kind == Miner::hnm)
    mined = hnm_augment(b, miner.s, miner.k, miner_rng);
  else if (miner.kind == Miner::cns)
    mined = cns_filter(b, miner.l, miner.u);

  switch (obj.kind) {
    case Objective::infonce: {
      Tensor scores = critic.scores(t, mined.anchors, mined.candidates, true);
      return infonce_loss(t, scores, mined.pos_mask, mined.neg_mask, obj.tau);
    }
    case Objective::jsd: {
      Tensor scores = critic.scores(t, mined.anchors, mined.candidates, true);
      return jsd_loss(t, scores, mined.pos_mask, mined.neg_mask);
    }
    case Objective::sp_jsd: {
      Tensor scores = critic.scores(t, mined.anchors, mined.candidates, true);
      return sp_jsd_loss(t, scores, mined.pos_mask, mined.neg_mask);
    }
    case Objective::triplet:
      return triplet_loss(t, mined.anchors, mined.candidates, mined.pos_mask,
                          mined.neg_mask, obj.epsilon);
    default:
      throw Error("objective has no batch form: " + objective_name(obj.kind));
  }
}

Tensor covariance_objective(Tape& t, Tensor z1, Tensor z2,
                            const ObjectiveSpec& obj) {
  if (obj.kind == Objective::barlow_twins)
    return barlow_twins_loss(t, z1, z2,
                             obj.bt_lambda(static_cast<int>(z1.val().cols())));
  return vicreg_loss(t, z1, z2, obj.vicreg_lambda(), obj.mu, obj.gamma);
}

// Aligned row pairs for covariance losses, which need equal-length batches.
std::pair<std::vector<int>, std::vector<int>> covariance_rows(
    const std::vector<int>& map1, const std::vector<int>& map2) {
  auto rows = aligned_rows(map1, map2);
  if (rows.first.size() < 2)
    throw ValidationError(
        "covariance objectives need at least 2 rows surviving both views; "
        "got " +
        std::to_string(rows.first.size()));
  return rows;
}

// Loss for the non-bootstrap objectives. v2 is null for the single branch.
Tensor plain_loss(Tape& t, const Encoder& encoder, const Critic& critic,
                  const ExperimentConfig& cfg, const ViewResult& v1,
                  const ViewResult* v2, RngStream& miner_rng,
                  RngStream& corrupt_rng) {
  const ObjectiveSpec& obj = cfg.objective;

  if (cfg.mode.branch == Branch::single) {
    // Corruption pipeline: one view, its graph summary attracts its own node
    // rows and repels the rows of a feature-shuffled twin.
    Tensor h = encoder.forward(t, v1.graph, true);
    Graph corrupted = v1.graph.with_features(
        corrupt_shuffle(v1.graph.features(), corrupt_rng));
    Tensor hc = encoder.forward(t, corrupted, true);
    Tensor s = readout(t, h, node_gid(v1.graph), cfg.readout.kind);
    ContrastBatch b =
        sample_cross_scale_single(t, s, h, hc, node_gid(v1.graph));
    return batch_objective(t, b, critic, obj, cfg.miner, miner_rng);
  }

  Tensor h1 = encoder.forward(t, v1.graph, true);
  Tensor h2 = encoder.forward(t, v2->graph, true);

  switch (cfg.mode.mode) {
    case Mode::LL: {
      if (covariance_based(obj.kind)) {
        auto rows = covariance_rows(v1.node_map, v2->node_map);
        return covariance_objective(t, t.gather_rows(h1, rows.first),
                                    t.gather_rows(h2, rows.second), obj);
      }
      SameScaleBatches b =
          sample_same_scale(t, h1, h2, v1.node_map, v2->node_map,
                            cfg.mode.intra_view_negatives);
      Tensor a = batch_objective(t, b.first, critic, obj, cfg.miner, miner_rng);
      Tensor c =
          batch_objective(t, b.second, critic, obj, cfg.miner, miner_rng);
      return t.mul_scalar(t.add(a, c), 0.5);
    }
    case Mode::GG: {
      Tensor s1 = readout(t, h1, node_gid(v1.graph), cfg.readout.kind);
      Tensor s2 = readout(t, h2, node_gid(v2->graph), cfg.readout.kind);
      if (covariance_based(obj.kind)) {
        auto rows = covariance_rows(v1.graph_map, v2->graph_map);
        return covariance_objective(t, t.gather_rows(s1, rows.first),
                                    t.gather_rows(s2, rows.second), obj);
      }
      SameScaleBatches b =
          sample_same_scale(t, s1, s2, v1.graph_map, v2->graph_map,
                            cfg.mode.intra_view_negatives);
      Tensor a = batch_objective(t, b.first, critic, obj, cfg.miner, miner_rng);
      Tensor c =
          batch_objective(t, b.second, critic, obj, cfg.miner, miner_rng);
      return t.mul_scalar(t.add(a, c), 0.5);
    }
    case Mode::GL: {
      Tensor s1 = readout(t, h1, node_gid(v1.graph), cfg.readout.kind);
      Tensor s2 = readout(t, h2, node_gid(v2->graph), cfg.readout.kind);
      ContrastBatch a =
          sample_cross_scale_dual(t, s1, h2, v1.graph_map, v2->graph_map,
                                  node_gid(v2->graph));
      ContrastBatch c =
          sample_cross_scale_dual(t, s2, h1, v2->graph_map, v1.graph_map,
                                  node_gid(v1.graph));
      Tensor la = batch_objective(t, a, critic, obj, cfg.miner, miner_rng);
      Tensor lc = batch_objective(t, c, critic, obj, cfg.miner, miner_rng);
      return t.mul_scalar(t.add(la, lc), 0.5);
    }
  }
  throw Error("unknown contrasting mode");
}

// Bootstrapped loss composed per mode from the online/target networks. The
// networks run over whole views (batch norm sees every row); the alignment
// gathers follow. Target activations are detached.
Tensor bootstrap_mode_loss(Tape& t, BootstrapNets& nets,
                           const ExperimentConfig& cfg, const Graph& original,
                           const ViewResult& v1, const ViewResult& v2) {
  auto online_nodes = [&](const Graph& g) {
    Tensor h = nets.enc_online.forward(t, g, true);
    return nets.pred_online.forward(
        t, nets.proj_online.forward(t, h, true), true);
  };
  auto target_nodes = [&](const Graph& g) {
    Tensor h = nets.enc_target.forward(t, g, true);
    return t.detach(nets.proj_target.forward(t, h, true));
  };
  auto pair_loss = [&](Tensor pred, std::vector<int> pred_rows, Tensor target,
                       std::vector<int> target_rows) {
    return cosine_alignment_loss(t,
                                 t.gather_rows(pred, std::move(pred_rows)),
                                 t.gather_rows(target, std::move(target_rows)));
  };

  switch (cfg.mode.mode) {
    case Mode::LL: {
      auto rows = aligned_rows(v1.node_map, v2.node_map);
      if (rows.first.empty())
        throw ValidationError("no nodes survive both views");
      Tensor a = pair_loss(online_nodes(v1.graph), rows.first,
                           target_nodes(v2.graph), rows.second);
      Tensor b = pair_loss(online_nodes(v2.graph), rows.second,
                           target_nodes(v1.graph), rows.first);
      return t.mul_scalar(t.add(a, b), 0.5);
    }
    case Mode::GG: {
      // Heads run at graph scale: encode, pool, then project and predict.
      auto online_graphs = [&](const Graph& g) {
        Tensor s = readout(t, nets.enc_online.forward(t, g, true),
                           node_gid(g), cfg.readout.kind);
        return nets.pred_online.forward(
            t, nets.proj_online.forward(t, s, true), true);
      };
      auto target_graphs = [&](const Graph& g) {
        Tensor s = readout(t, nets.enc_target.forward(t, g, true),
                           node_gid(g), cfg.readout.kind);
        return t.detach(nets.proj_target.forward(t, s, true));
      };
      auto rows = aligned_rows(v1.graph_map, v2.graph_map);
      if (rows.first.empty())
        throw ValidationError("no graphs survive both views");
      Tensor a = pair_loss(online_graphs(v1.graph), rows.first,
                           target_graphs(v2.graph), rows.second);
      Tensor b = pair_loss(online_graphs(v2.graph), rows.second,
                           target_graphs(v1.graph), rows.first);
      return t.mul_scalar(t.add(a, b), 0.5);
    }
    case Mode::GL: {
      // Each surviving node predicts the target summary of its own graph in
      // the other view, in both directions.
      auto target_graphs = [&](const Graph& g) {
        Tensor s = readout(t, nets.enc_target.forward(t, g, true),
                           node_gid(g), cfg.readout.kind);
        return t.detach(nets.proj_target.forward(t, s, true));
      };
      const std::vector<int> orig_gid = node_gid(original);
      auto cross_rows = [&](const std::vector<int>& nmap,
                            const std::vector<int>& gmap_other) {
        std::pair<std::vector<int>, std::vector<int>> rows;
        for (std::size_t i = 0; i < nmap.size(); ++i) {
          int g = gmap_other[orig_gid[i]];
          if (nmap[i] >= 0 && g >= 0) {
            rows.first.push_back(nmap[i]);
            rows.second.push_back(g);
          }
        }
        return rows;
      };
      auto r12 = cross_rows(v1.node_map, v2.graph_map);
      auto r21 = cross_rows(v2.node_map, v1.graph_map);
      if (r12.first.empty() || r21.first.empty())
        throw ValidationError("no node/graph pairs survive the two views");
      Tensor a = pair_loss(online_nodes(v1.graph), r12.first,
                           target_graphs(v2.graph), r12.second);
      Tensor b = pair_loss(online_nodes(v2.graph), r21.first,
                           target_graphs(v1.graph), r21.second);
      return t.mul_scalar(t.add(a, b), 0.5);
    }
  }
  throw Error("unknown contrasting mode");
}

std::vector<Eigen::MatrixXd> snapshot_values(const ParamStore& s) {
  std::vector<Eigen::MatrixXd> out;
  for (const Parameter* p : s.all()) out.push_back(p->value);
  return out;
}

void restore_values(ParamStore& s, const std::vector<Eigen::MatrixXd>& vals) {
  auto params = s.all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = vals[i];
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_artifacts(const std::string& dir, const ExperimentConfig& cfg,
                     const TrialResult& res, const ParamStore& store) {
  std::filesystem::create_directories(dir);
  save_config(cfg, dir + "/config.json");
  {
    std::ofstream out(dir + "/loss.csv");
    if (!out) throw Error("cannot write " + dir + "/loss.csv");
    out << "epoch,loss\n";
    char buf[48];
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, res.loss_curve[i]);
      out << buf;
    }
  }
  save_checkpoint(store, dir + "/checkpoint.bin");
  write_matrix_csv(dir + "/embeddings.csv", res.embeddings);
  {
    std::ofstream out(dir + "/eval.json");
    if (!out) throw Error("cannot write " + dir + "/eval.json");
    out << eval_report_json(res.report) << "\n";
  }
}

}  // namespace

TrialData materialize_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  TrialData data;
  if (!spec.is_synth()) {
    std::ifstream in(spec.path);
    if (!in) throw ParseError("cannot open dataset file: " + spec.path);
    json root;
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError("dataset file " + spec.path + ": " + e.what());
    }
    if (root.is_object() && root.contains("graphs"))
      data.graph = batch_graphs(load_graphs(spec.path));
    else
      data.graph = load_graph(spec.path);
  } else if (spec.synth == SynthKind::sbm) {
    data.graph =
        gen_sbm(spec.n_per_block, spec.n_blocks, spec.p_in, spec.p_out,
                spec.feature_dim, spec.noise_sigma, derive_seed(seed, "data"));
  } else {
    std::vector<GraphFamily> families;
    families.reserve(spec.classes.size());
    for (const std::string& name : spec.classes)
      families.push_back(parse_family(name));
    auto graphs = gen_graph_dataset(spec.n_graphs, families, spec.size_min,
                                    spec.size_max, derive_seed(seed, "data"));
    data.graph = batch_graphs(graphs);
  }
  if (!data.graph.labels())
    throw ValidationError("dataset has no labels; the probe needs targets");
  data.graph_task = data.graph.num_graphs() >= 2;
  data.labels = data.graph_task ? graph_level_labels(data.graph)
                                : *data.graph.labels();
  return data;
}

std::string run_root() {
  const char* env = std::getenv("GCL_RUN_DIR");
  return (env && *env) ? std::string(env) : std::string("runs");
}

std::string default_run_dir(const ExperimentConfig& config,
                            const std::string& root) {
  std::uint64_t h = detail::fnv1a(config_to_json(config).dump());
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial-%016llx",
                static_cast<unsigned long long>(h));
  return root + "/" + buf;
}

TrialResult run_trial(const ExperimentConfig& config,
                      const std::string& run_dir) {
  staged("config", -1, [&] { config.validate(); });

  const std::uint64_t seed = config.optimizer.seed;
  TrialData data = staged("load", -1, [&] {
    TrialData d = materialize_dataset(config.dataset, seed);
    // File datasets reveal their graph count only now.
    check_mode_graph_count(config.mode, d.graph.num_graphs());
    return d;
  });

  ExperimentConfig cfg = config;
  staged("setup", -1, [&] {
    int fdim = static_cast<int>(data.graph.features().cols());
    if (cfg.encoder.input_dim == 0) cfg.encoder.input_dim = fdim;
    if (cfg.encoder.input_dim != fdim)
      throw ConfigError("encoder input_dim " +
                        std::to_string(cfg.encoder.input_dim) +
                        " does not match the dataset's feature dim " +
                        std::to_string(fdim));
    cfg.encoder.validate();
  });

  RngStream root(seed);
  const bool bl = cfg.objective.kind == Objective::bootstrap;
  const bool dual = cfg.mode.branch == Branch::dual;

  ParamStore store;
  Encoder encoder;
  Critic critic;
  std::optional<BootstrapNets> nets;
  staged("init", -1, [&] {
    RngStream init = root.substream("init");
    if (bl) {
      nets.emplace(cfg.encoder, cfg.objective.bn, init);
    } else {
      encoder = Encoder(store, "enc", cfg.encoder, init);
      if (score_based(cfg.objective.kind))
        critic = Critic(store, "critic", cfg.encoder.hidden_dim,
                        cfg.encoder.hidden_dim, false, init);
    }
  });
  ParamStore& trained = bl ? nets->online : store;

  AdamW opt(cfg.optimizer.lr, cfg.optimizer.weight_decay);
  EarlyStopMonitor monitor(50);
  TrialResult result;
  result.run_dir = run_dir;
  std::vector<Eigen::MatrixXd> best;
  double edges_sum = 0.0;
  long views_n = 0;

  for (int epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    ViewResult v1 = staged("views", epoch, [&] {
      RngStream s = root.substream("aug1", static_cast<std::uint64_t>(epoch));
      return apply(cfg.augmentor1, data.graph, s);
    });
    std::optional<ViewResult> v2;
    if (dual) {
      v2 = staged("views", epoch, [&] {
        RngStream s =
            root.substream("aug2", static_cast<std::uint64_t>(epoch));
        return apply(cfg.augmentor2, data.graph, s);
      });
    }
    edges_sum += v1.graph.num_edges();
    ++views_n;
    if (v2) {
      edges_sum += v2->graph.num_edges();
      ++views_n;
    }

    double loss_value = staged("loss", epoch, [&] {
      trained.zero_grad();
      if (bl) nets->target.zero_grad();
      Tape t;
      RngStream miner_rng =
          root.substream("miner", static_cast<std::uint64_t>(epoch));
      RngStream corrupt_rng =
          root.substream("corrupt", static_cast<std::uint64_t>(epoch));
      Tensor loss =
          bl ? bootstrap_mode_loss(t, *nets, cfg, data.graph, v1, *v2)
             : plain_loss(t, encoder, critic, cfg, v1,
                          v2 ? &*v2 : nullptr, miner_rng, corrupt_rng);
      t.backward(loss);
      double value = loss.val()(0, 0);
      if (!std::isfinite(value))
        throw Error("loss is not finite: " + std::to_string(value));
      return value;
    });

    result.loss_curve.push_back(loss_value);
    bool stop = monitor.observe(loss_value);
    if (monitor.best_index() == epoch) {
      // Parameters that produced this loss, captured before the step.
      best = snapshot_values(trained);
      result.best_epoch = epoch;
    }
    staged("step", epoch, [&] {
      opt.step(trained);
      if (bl) bootstrap_target_update(*nets, cfg.objective.ema_decay);
    });
    if (stop) break;
  }

  if (result.best_epoch >= 0) restore_values(trained, best);
  result.mean_view_edges =
      views_n ? edges_sum / views_n
              : std::numeric_limits<double>::quiet_NaN();

  staged("probe", -1, [&] {
    Tape t;
    const Encoder& enc = bl ? nets->enc_online : encoder;
    Tensor h = enc.forward(t, data.graph, false);
    result.embeddings =
        data.graph_task
            ? readout(t, h, node_gid(data.graph), cfg.readout.kind).val()
            : h.val();
    auto splits =
        make_splits(data.labels, cfg.eval.n_splits, derive_seed(seed, "probe"));
    ProbeOptions options;
    options.l2_grid = cfg.eval.l2_grid;
    result.report = linear_probe(result.embeddings, data.labels, splits,
                                 options);
  });
  result.labels = data.labels;

  if (!run_dir.empty())
    staged("artifacts", -1,
           [&] { write_artifacts(run_dir, cfg, result, trained); });
  return result;
}

TrialResult run_trial(const ExperimentConfig& config) {
  return run_trial(config, default_run_dir(config, run_root()));
}

std::vector<SweepRow> sweep(const ExperimentConfig& base,
                            const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::string& root) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (const std::string& value : values) {
    SweepRow row;
    row.value = value;
    try {
      ExperimentConfig cfg = base;
      apply_override(cfg, axis, value);
      cfg.validate();
      std::string dir = root.empty() ? "" : default_run_dir(cfg, root);
      TrialResult r = run_trial(cfg, dir);
      row.ok = true;
      row.mean = r.report.mean;
      row.std_dev = r.report.std_dev;
      row.mean_view_edges = r.mean_view_edges;
    } catch (const ConfigError& e) {
      row.config_error = true;
      row.error = e.what();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "value,mean,std,mean_edges_in_views\n";
  for (const SweepRow& r : rows) {
    out += r.value;
    if (r.ok) {
      char buf[96];
      std::snprintf(buf, sizeof buf, ",%.12g,%.12g,%.12g\n", r.mean,
                    r.std_dev, r.mean_view_edges);
      out += buf;
    } else {
      out += ",nan,nan,nan\n";
    }
  }
  return out;
}

}  // namespace gcl
