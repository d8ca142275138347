#include "gcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gcl/error.hpp"

namespace gcl {

namespace {

// Row-stable softmax probabilities.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (int i = 0; i < p.rows(); ++i) {
    double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Ties take the smallest class index.
int argmax_row(const Eigen::MatrixXd& m, int row) {
  int best = 0;
  for (int j = 1; j < m.cols(); ++j)
    if (m(row, j) > m(row, best)) best = j;
  return best;
}

struct ProbeModel {
  Eigen::MatrixXd w;  // D x C
  Eigen::RowVectorXd b;
};

// Full-batch gradient descent on mean cross-entropy plus l2 * ||W||^2; the
// bias is unpenalized. Learning rate follows a cosine schedule from lr to 0.
ProbeModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                        int classes, double l2, int steps, double lr) {
  int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, classes);
  for (int i = 0; i < n; ++i) onehot(i, y[i]) = 1.0;

  ProbeModel m{Eigen::MatrixXd::Zero(d, classes),
               Eigen::RowVectorXd::Zero(classes)};
  for (int t = 0; t < steps; ++t) {
    double rate = lr * 0.5 * (1.0 + std::cos(M_PI * t / steps));
    Eigen::MatrixXd logits = (x * m.w).rowwise() + m.b;
    Eigen::MatrixXd g = (softmax_rows(logits) - onehot) / n;
    m.w -= rate * (x.transpose() * g + 2.0 * l2 * m.w);
    m.b -= rate * g.colwise().sum();
  }
  return m;
}

double accuracy(const ProbeModel& m, const Eigen::MatrixXd& emb,
                const std::vector<int>& classes_of,
                const std::vector<int>& rows) {
  int hits = 0;
  for (int r : rows) {
    Eigen::MatrixXd logits = (emb.row(r) * m.w).rowwise() + m.b;
    if (argmax_row(logits, 0) == classes_of[r]) ++hits;
  }
  return static_cast<double>(hits) / rows.size();
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& emb, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), emb.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = emb.row(rows[i]);
  return out;
}

void check_split(const Split& s, int n) {
  if (s.train_idx.empty() || s.valid_idx.empty() || s.test_idx.empty())
    throw ValidationError("linear_probe: every split part must be nonempty");
  std::vector<int> seen(n, 0);
  for (const std::vector<int>* part : {&s.train_idx, &s.valid_idx, &s.test_idx})
    for (int i : *part) {
      if (i < 0 || i >= n)
        throw ValidationError("linear_probe: split index out of range");
      if (seen[i]++)
        throw ValidationError("linear_probe: split parts overlap");
    }
}

}  // namespace

void ProbeOptions::validate() const {
  if (steps < 1) throw ConfigError("probe: steps must be positive");
  if (!(lr > 0.0)) throw ConfigError("probe: learning rate must be positive");
  if (l2_grid.empty()) throw ConfigError("probe: l2 grid must be nonempty");
  for (double l2 : l2_grid)
    if (!(l2 >= 0.0))
      throw ConfigError("probe: l2 strengths must be non-negative");
}

EvalReport linear_probe(const Eigen::MatrixXd& embeddings,
                        const std::vector<int>& labels,
                        const std::vector<Split>& splits,
                        const ProbeOptions& options) {
  options.validate();
  int n = static_cast<int>(embeddings.rows());
  if (static_cast<int>(labels.size()) != n)
    throw ValidationError("linear_probe: need one label per embedding row");
  if (splits.empty())
    throw ValidationError("linear_probe: need at least one split");

  // Global class index map, shared by every split.
  std::map<int, int> class_of;
  for (int l : labels) class_of.emplace(l, 0);
  int classes = 0;
  for (auto& kv : class_of) kv.second = classes++;
  if (classes < 2)
    throw ValidationError("linear_probe: need at least two classes");
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = class_of.at(labels[i]);

  EvalReport report;
  report.options = options;
  for (const Split& split : splits) {
    check_split(split, n);
    std::vector<int> y_train;
    for (int i : split.train_idx) y_train.push_back(y[i]);
    if (*std::max_element(y_train.begin(), y_train.end()) ==
        *std::min_element(y_train.begin(), y_train.end()))
      throw ValidationError(
          "linear_probe: a training split holds a single class; "
          "resample the split");

    Eigen::MatrixXd x_train = gather(embeddings, split.train_idx);
    double best_val = -1.0, best_l2 = options.l2_grid.front();
    ProbeModel best_model;
    for (double l2 : options.l2_grid) {
      ProbeModel m = fit_logistic(x_train, y_train, classes, l2,
                                  options.steps, options.lr);
      double val_acc = accuracy(m, embeddings, y, split.valid_idx);
      if (val_acc > best_val) {
        best_val = val_acc;
        best_l2 = l2;
        best_model = m;
      }
    }
    report.per_split.push_back(
        accuracy(best_model, embeddings, y, split.test_idx));
    report.split_seeds.push_back(split.seed);
    report.chosen_l2.push_back(best_l2);
  }

  double sum = 0.0;
  for (double a : report.per_split) sum += a;
  report.mean = sum / report.per_split.size();
  double ss = 0.0;
  for (double a : report.per_split)
    ss += (a - report.mean) * (a - report.mean);
  report.std_dev = std::sqrt(ss / report.per_split.size());
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["mean"] = report.mean;
  j["std"] = report.std_dev;
  j["per_split"] = report.per_split;
  j["split_seeds"] = report.split_seeds;
  j["chosen_l2"] = report.chosen_l2;
  j["probe"] = {{"steps", report.options.steps},
                {"lr", report.options.lr},
                {"l2_grid", report.options.l2_grid}};
  return j.dump(2);
}

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream out;
  // Seeds are full 64-bit values, up to 20 digits wide.
  out << std::left << std::setw(8) << "split" << std::setw(22) << "seed"
      << std::setw(12) << "l2" << std::setw(10) << "acc" << "\n";
  out << std::string(52, '-') << "\n";
  out << std::fixed << std::setprecision(4);
  for (size_t i = 0; i < report.per_split.size(); ++i)
    out << std::left << std::setw(8) << i << std::setw(22)
        << report.split_seeds[i] << std::setw(12) << report.chosen_l2[i]
        << std::setw(10) << report.per_split[i] << "\n";
  out << std::string(52, '-') << "\n";
  out << "mean " << report.mean << " +/- " << report.std_dev << "\n";
  return out.str();
}

EarlyStopMonitor::EarlyStopMonitor(int window) : window_(window) {
  if (window < 1)
    throw ConfigError("early stop: window must be at least 1");
}

bool EarlyStopMonitor::observe(double loss) {
  int index = seen_++;
  if (best_ < 0 || loss < best_loss_) {
    best_ = index;
    best_loss_ = loss;
    return false;
  }
  return index - best_ >= window_;
}

int early_stop_scan(const std::vector<double>& losses, int window) {
  if (losses.empty())
    throw ValidationError("early stop: loss stream is empty");
  EarlyStopMonitor monitor(window);
  for (double l : losses)
    if (monitor.observe(l)) break;
  return monitor.best_index();
}

}  // namespace gcl
