// Frozen-embedding linear evaluation (l2-regularized multinomial logistic
// regression over random splits) and loss-stream early stopping.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcl/generators.hpp"  // Split, make_splits

namespace gcl {

/// Probe training knobs: full-batch gradient descent with a cosine-decayed
/// learning rate, and the l2 strengths searched by validation accuracy.
struct ProbeOptions {
  int steps = 500;
  double lr = 0.1;
  std::vector<double> l2_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};

  void validate() const;
};

/// Per-split test accuracies plus the settings that produced them.
struct EvalReport {
  std::vector<double> per_split;
  double mean = 0.0;
  double std_dev = 0.0;
  std::vector<uint64_t> split_seeds;
  std::vector<double> chosen_l2;  // validation winner per split
  ProbeOptions options;
};

/// Trains an l2-regularized multinomial logistic regression on the frozen
/// embeddings for every split and l2 strength in the grid, picks the
/// strength by validation accuracy, and reports test accuracy per split
/// with mean and standard deviation. Weights start at zero, the bias is
/// exempt from the penalty, and ties (in validation accuracy or argmax)
/// resolve to the earlier grid entry or smaller class index. Requires at
/// least two classes overall and in every training set.
EvalReport linear_probe(const Eigen::MatrixXd& embeddings,
                        const std::vector<int>& labels,
                        const std::vector<Split>& splits,
                        const ProbeOptions& options = {});

/// JSON object {"mean": .., "std": .., "per_split": [..], ...}.
std::string eval_report_json(const EvalReport& report);

/// Fixed-width per-split table with a mean +/- std footer.
std::string eval_report_table(const EvalReport& report);

/// Tracks the running minimum of a loss stream; halts a training loop once
/// `window` consecutive observations pass without a new strict minimum.
class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(int window = 50);

  /// Feeds one loss; true means stop now (the window just elapsed).
  bool observe(double loss);

  int best_index() const { return best_; }
  double best_loss() const { return best_loss_; }
  int count() const { return seen_; }

 private:
  int window_;
  int best_ = -1;
  int seen_ = 0;
  double best_loss_ = 0.0;
};

/// Scans a recorded stream with the monitor and returns the index of the
/// global minimum over the consumed prefix (the whole stream when the stop
/// condition never fires).
int early_stop_scan(const std::vector<double>& losses, int window = 50);

}  // namespace gcl
