// Encoder stack: parameter store, layers, GCN/GIN encoders, readout, AdamW,
// and binary checkpointing.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

/// Owns named Parameters. Names are unique; registration order is the
/// checkpoint order. Non-trainable entries (batch-norm running statistics)
/// are checkpointed but skipped by the optimizer.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Eigen::MatrixXd value,
                    bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();                // registration order
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();

  void zero_grad();
  /// Global L2 norm over trainable parameter values.
  double value_norm() const;

  /// Copies values from another store with identical names/shapes.
  void copy_values_from(const ParamStore& other);
  /// value <- momentum * value + (1 - momentum) * other.value, per entry.
  void ema_update_from(const ParamStore& other, double momentum);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<bool> trainable_;
};

/// Uniform Glorot initialization: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Eigen::MatrixXd glorot_uniform(int rows, int cols, RngStream& rng);

enum class Activation { relu, prelu };
Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

/// Affine layer y = xW (+ b). Bias is optional so positively homogeneous
/// projection heads can be built.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
         bool bias, RngStream& rng);
  Tensor forward(Tape& t, Tensor x) const;

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

/// Column batch normalization with learnable affine and running statistics
/// (momentum 0.9) for eval mode.
class BatchNorm {
 public:
  static constexpr double kEps = 1e-8;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& prefix, int dim);
  /// Training mode standardizes with batch statistics and updates the
  /// running averages; eval mode uses the running averages.
  Tensor forward(Tape& t, Tensor x, bool training) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  Parameter* run_mean_ = nullptr;  // non-trainable buffers
  Parameter* run_var_ = nullptr;
};

/// Multi-layer perceptron: Linear (+BatchNorm) + activation between layers,
/// linear output. A PReLU slope parameter is created per hidden layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix,
      const std::vector<int>& dims, Activation act, bool batchnorm, bool bias,
      RngStream& rng);
  Tensor forward(Tape& t, Tensor x, bool training) const;

 private:
  std::vector<Linear> linears_;
  std::vector<BatchNorm> norms_;
  std::vector<Parameter*> slopes_;
  Activation act_ = Activation::relu;
  bool batchnorm_ = false;
};

enum class EncoderKind { gcn, gin };
EncoderKind parse_encoder_kind(const std::string& name);
std::string encoder_kind_name(EncoderKind k);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::gcn;
  int layers = 2;
  int input_dim = 0;
  int hidden_dim = 64;
  Activation activation = Activation::prelu;
  bool use_batchnorm = false;

  void validate() const;
};

/// Message-passing encoder. GCN layers compute act(A_hat H W) over the
/// symmetric-normalized self-loop matrix; GIN layers compute
/// mlp(H + A H) over the raw adjacency with a two-layer MLP per layer.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore& store, const std::string& prefix, const EncoderSpec& spec,
          RngStream& rng);

  /// Node embeddings (num_nodes x hidden_dim) for a view graph.
  Tensor forward(Tape& t, const Graph& g, bool training) const;

  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  std::vector<Linear> linears_;      // GCN
  std::vector<Mlp> mlps_;            // GIN
  std::vector<BatchNorm> norms_;     // GCN, when use_batchnorm
  std::vector<Parameter*> slopes_;   // per-layer PReLU
};

enum class ReadoutKind { mean, sum };
ReadoutKind parse_readout_kind(const std::string& name);
std::string readout_kind_name(ReadoutKind k);

/// Pools node rows into one row per member graph. Throws if some graph id
/// in [0, num_graphs) has no member.
Tensor readout(Tape& t, Tensor h, const std::vector<int>& graph_id,
               ReadoutKind kind);

/// Adam with decoupled weight decay. Deterministic; holds the step counter.
class AdamW {
 public:
  explicit AdamW(double lr, double weight_decay = 0.0, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore& store);
  int steps_taken() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
};

/// Writes values as a flat little-endian binary of doubles at `path` plus a
/// JSON manifest at `path + ".json"` (names, shapes, offsets).
void save_checkpoint(const ParamStore& store, const std::string& path);
/// Restores values into an identically structured store; name or shape
/// mismatch is an error.
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace gcl
