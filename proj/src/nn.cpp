#include "gcl/nn.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace gcl {

using nlohmann::json;

Parameter& ParamStore::create(const std::string& name, Eigen::MatrixXd value,
                              bool trainable) {
  if (contains(name))
    throw ValidationError("param store: duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  trainable_.push_back(trainable);
  return *params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ValidationError("param store: unknown parameter '" + name + "'");
}

const Parameter& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ValidationError("param store: unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParamStore::trainable() {
  std::vector<Parameter*> out;
  for (size_t i = 0; i < params_.size(); ++i)
    if (trainable_[i]) out.push_back(params_[i].get());
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

double ParamStore::value_norm() const {
  double s = 0.0;
  for (size_t i = 0; i < params_.size(); ++i)
    if (trainable_[i]) s += params_[i]->value.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  auto mine = all();
  auto theirs = other.all();
  if (mine.size() != theirs.size())
    throw ValidationError("param store: size mismatch in copy");
  for (size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->name != theirs[i]->name ||
        mine[i]->value.rows() != theirs[i]->value.rows() ||
        mine[i]->value.cols() != theirs[i]->value.cols())
      throw ValidationError("param store: structure mismatch at '" +
                            mine[i]->name + "'");
    mine[i]->value = theirs[i]->value;
  }
}

void ParamStore::ema_update_from(const ParamStore& other, double momentum) {
  auto mine = all();
  auto theirs = other.all();
  if (mine.size() != theirs.size())
    throw ValidationError("param store: size mismatch in ema update");
  for (size_t i = 0; i < mine.size(); ++i)
    mine[i]->value =
        momentum * mine[i]->value + (1.0 - momentum) * theirs[i]->value;
}

Eigen::MatrixXd glorot_uniform(int rows, int cols, RngStream& rng) {
  double a = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (2.0 * rng.uniform() - 1.0) * a;
  return m;
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "prelu") return Activation::prelu;
  throw ConfigError("unknown activation '" + name + "' (valid: relu, prelu)");
}

std::string activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "prelu";
}

Linear::Linear(ParamStore& store, const std::string& prefix, int in_dim,
               int out_dim, bool bias, RngStream& rng) {
  w_ = &store.create(prefix + ".weight", glorot_uniform(in_dim, out_dim, rng));
  if (bias) b_ = &store.create(prefix + ".bias", Eigen::MatrixXd::Zero(1, out_dim));
}

Tensor Linear::forward(Tape& t, Tensor x) const {
  Tensor y = t.matmul(x, t.param(*w_));
  if (b_) y = t.bcast_add_row(y, t.param(*b_));
  return y;
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& prefix, int dim) {
  gamma_ = &store.create(prefix + ".gamma", Eigen::MatrixXd::Ones(1, dim));
  beta_ = &store.create(prefix + ".beta", Eigen::MatrixXd::Zero(1, dim));
  run_mean_ = &store.create(prefix + ".running_mean",
                            Eigen::MatrixXd::Zero(1, dim), false);
  run_var_ = &store.create(prefix + ".running_var",
                           Eigen::MatrixXd::Ones(1, dim), false);
}

Tensor BatchNorm::forward(Tape& t, Tensor x, bool training) const {
  Tensor y;
  if (training) {
    const auto& vx = x.val();
    double n = static_cast<double>(vx.rows());
    Eigen::RowVectorXd mean = vx.colwise().mean();
    Eigen::RowVectorXd var =
        (vx.rowwise() - mean).array().square().colwise().sum() / n;
    run_mean_->value = kMomentum * run_mean_->value + (1.0 - kMomentum) * mean.matrix();
    run_var_->value = kMomentum * run_var_->value + (1.0 - kMomentum) * var.matrix();
    y = t.standardize_cols(x, kEps);
  } else {
    Eigen::RowVectorXd inv_s =
        (run_var_->value.row(0).array() + kEps).rsqrt();
    Tensor centered = t.bcast_add_row(x, t.constant(-run_mean_->value));
    y = t.bcast_mul_row(centered, t.constant(inv_s.matrix()));
  }
  y = t.bcast_mul_row(y, t.param(*gamma_));
  return t.bcast_add_row(y, t.param(*beta_));
}

Mlp::Mlp(ParamStore& store, const std::string& prefix,
         const std::vector<int>& dims, Activation act, bool batchnorm,
         bool bias, RngStream& rng)
    : act_(act), batchnorm_(batchnorm) {
  if (dims.size() < 2) throw ValidationError("mlp: need at least one layer");
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    std::string lp = prefix + ".l" + std::to_string(l);
    linears_.emplace_back(store, lp, dims[l], dims[l + 1], bias, rng);
    bool hidden = l + 2 < dims.size();
    if (hidden) {
      if (batchnorm) norms_.emplace_back(store, lp + ".bn", dims[l + 1]);
      if (act == Activation::prelu)
        slopes_.push_back(&store.create(lp + ".prelu_slope",
                                        Eigen::MatrixXd::Constant(1, 1, 0.25)));
    }
  }
}

Tensor Mlp::forward(Tape& t, Tensor x, bool training) const {
  Tensor h = x;
  for (size_t l = 0; l < linears_.size(); ++l) {
    h = linears_[l].forward(t, h);
    bool hidden = l + 1 < linears_.size();
    if (!hidden) break;
    if (batchnorm_) h = norms_[l].forward(t, h, training);
    h = act_ == Activation::relu ? t.relu(h)
                                 : t.prelu(h, t.param(*slopes_[l]));
  }
  return h;
}

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "gcn") return EncoderKind::gcn;
  if (name == "gin") return EncoderKind::gin;
  throw ConfigError("unknown encoder kind '" + name + "' (valid: gcn, gin)");
}

std::string encoder_kind_name(EncoderKind k) {
  return k == EncoderKind::gcn ? "gcn" : "gin";
}

void EncoderSpec::validate() const {
  if (layers < 2 || layers > 4)
    throw ConfigError("encoder layers must lie in [2,4], got " +
                      std::to_string(layers));
  if (input_dim < 1 || hidden_dim < 1)
    throw ConfigError("encoder dims must be positive");
}

Encoder::Encoder(ParamStore& store, const std::string& prefix,
                 const EncoderSpec& spec, RngStream& rng)
    : spec_(spec) {
  spec_.validate();
  for (int l = 0; l < spec_.layers; ++l) {
    int in = l == 0 ? spec_.input_dim : spec_.hidden_dim;
    std::string lp = prefix + ".layer" + std::to_string(l);
    if (spec_.kind == EncoderKind::gcn) {
      linears_.emplace_back(store, lp, in, spec_.hidden_dim, false, rng);
      if (spec_.use_batchnorm) norms_.emplace_back(store, lp + ".bn", spec_.hidden_dim);
    } else {
      mlps_.emplace_back(store, lp + ".mlp",
                         std::vector<int>{in, spec_.hidden_dim, spec_.hidden_dim},
                         Activation::relu, spec_.use_batchnorm, true, rng);
    }
    if (spec_.activation == Activation::prelu)
      slopes_.push_back(&store.create(lp + ".prelu_slope",
                                      Eigen::MatrixXd::Constant(1, 1, 0.25)));
  }
}

Tensor Encoder::forward(Tape& t, const Graph& g, bool training) const {
  if (g.features().cols() != spec_.input_dim)
    throw TensorError("encoder: feature dim " +
                      std::to_string(g.features().cols()) + " != configured " +
                      std::to_string(spec_.input_dim));
  Tensor h = t.constant(g.features());
  if (spec_.kind == EncoderKind::gcn) {
    Csr a_hat = derive(g, MatrixKind::sym_norm_selfloop).matrix;
    for (int l = 0; l < spec_.layers; ++l) {
      h = linears_[l].forward(t, t.spmm(a_hat, h));
      if (spec_.use_batchnorm) h = norms_[l].forward(t, h, training);
      h = spec_.activation == Activation::relu
              ? t.relu(h)
              : t.prelu(h, t.param(*slopes_[l]));
    }
  } else {
    const Csr& adj = g.adjacency();
    for (int l = 0; l < spec_.layers; ++l) {
      Tensor agg = t.add(h, t.spmm(adj, h));
      h = mlps_[l].forward(t, agg, training);
      h = spec_.activation == Activation::relu
              ? t.relu(h)
              : t.prelu(h, t.param(*slopes_[l]));
    }
  }
  return h;
}

ReadoutKind parse_readout_kind(const std::string& name) {
  if (name == "mean") return ReadoutKind::mean;
  if (name == "sum") return ReadoutKind::sum;
  throw ConfigError("unknown readout kind '" + name + "' (valid: mean, sum)");
}

std::string readout_kind_name(ReadoutKind k) {
  return k == ReadoutKind::mean ? "mean" : "sum";
}

Tensor readout(Tape& t, Tensor h, const std::vector<int>& graph_id,
               ReadoutKind kind) {
  const int n = h.rows();
  if (static_cast<int>(graph_id.size()) != n)
    throw TensorError("readout: graph_id size " +
                      std::to_string(graph_id.size()) + " != rows " +
                      std::to_string(n));
  int m = 0;
  for (int id : graph_id) m = std::max(m, id + 1);
  std::vector<int> count(m, 0);
  for (int id : graph_id) {
    if (id < 0) throw TensorError("readout: negative graph id");
    count[id]++;
  }
  for (int gi = 0; gi < m; ++gi)
    if (count[gi] == 0)
      throw TensorError("readout: empty graph id group " + std::to_string(gi));
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(n);
  for (int v = 0; v < n; ++v) {
    double w = kind == ReadoutKind::mean ? 1.0 / count[graph_id[v]] : 1.0;
    trip.emplace_back(graph_id[v], v, w);
  }
  return t.spmm(Csr::from_triplets(m, n, std::move(trip)), h);
}

void AdamW::step(ParamStore& store) {
  ++t_;
  double c1 = 1.0 - std::pow(b1_, t_);
  double c2 = 1.0 - std::pow(b2_, t_);
  for (Parameter* p : store.trainable()) {
    p->adam_m = b1_ * p->adam_m + (1.0 - b1_) * p->grad;
    p->adam_v = b2_ * p->adam_v + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
    Eigen::MatrixXd m_hat = p->adam_m / c1;
    Eigen::MatrixXd v_hat = p->adam_v / c2;
    Eigen::MatrixXd update =
        (m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
    p->value -= lr_ * (update + wd_ * p->value);
  }
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw Error("cannot write checkpoint: " + path);
  json manifest;
  manifest["entries"] = json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : store.all()) {
    // Row-major write so the manifest is layout-unambiguous.
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) {
        double v = p->value(i, j);
        bin.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    manifest["entries"].push_back({{"name", p->name},
                                   {"rows", p->value.rows()},
                                   {"cols", p->value.cols()},
                                   {"offset", offset}});
    offset += static_cast<std::uint64_t>(p->value.size()) * sizeof(double);
  }
  std::ofstream man(path + ".json");
  if (!man) throw Error("cannot write checkpoint manifest: " + path + ".json");
  man << manifest.dump(1) << "\n";
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream man(path + ".json");
  if (!man) throw ParseError("cannot open checkpoint manifest: " + path + ".json");
  json manifest;
  try {
    man >> manifest;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what());
  }
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw ParseError("cannot open checkpoint: " + path);

  auto params = store.all();
  const auto& entries = manifest["entries"];
  if (entries.size() != params.size())
    throw ValidationError("checkpoint: entry count " +
                          std::to_string(entries.size()) + " != store size " +
                          std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    if (e["name"].get<std::string>() != params[i]->name)
      throw ValidationError("checkpoint: name mismatch at index " +
                            std::to_string(i) + ": '" +
                            e["name"].get<std::string>() + "' vs '" +
                            params[i]->name + "'");
    if (e["rows"].get<long>() != params[i]->value.rows() ||
        e["cols"].get<long>() != params[i]->value.cols())
      throw ValidationError("checkpoint: shape mismatch for '" +
                            params[i]->name + "'");
    bin.seekg(static_cast<std::streamoff>(e["offset"].get<std::uint64_t>()));
    for (int r = 0; r < params[i]->value.rows(); ++r)
      for (int c = 0; c < params[i]->value.cols(); ++c) {
        double v;
        bin.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!bin) throw ParseError("checkpoint: truncated binary at '" +
                                   params[i]->name + "'");
        params[i]->value(r, c) = v;
      }
  }
}

}  // namespace gcl
