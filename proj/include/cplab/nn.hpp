#ifndef CPLAB_NN_HPP_
#define CPLAB_NN_HPP_

#include <map>
#include <string>
#include <vector>

#include "cplab/autograd.hpp"
#include "cplab/rng.hpp"

namespace cplab {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

// Flat name -> matrix map used for checkpoints (parameters and BN buffers).
using StateDict = std::map<std::string, Matrix>;

enum class Mode { kTrain, kEval };

// y = W x + b on column-per-sample batches. W is out x in, b is out x 1.
class LinearLayer {
 public:
  // Weights and bias uniform in [-sqrt(1/in), sqrt(1/in)].
  LinearLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng, std::string name);
  LinearLayer(Matrix weight, Matrix bias, std::string name);

  Var forward(const Var& x) const;

  std::size_t in_dim() const { return weight_.cols(); }
  std::size_t out_dim() const { return weight_.rows(); }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

  void collect_params(ParamList& out) const;
  void export_state(StateDict& out) const;
  void import_state(const StateDict& in);

 private:
  std::string name_;
  Var weight_;
  Var bias_;
};

// Per-feature normalization over the batch (columns). Train mode uses batch
// statistics and updates the running estimates; eval mode uses the running ones.
class BatchNormLayer {
 public:
  BatchNormLayer(std::size_t dim, std::string name, bool affine = true, double eps = 1e-5,
                 double momentum = 0.1);

  Var forward(const Var& x);

  void set_mode(Mode m) { mode_ = m; }
  Mode mode() const { return mode_; }
  std::size_t dim() const { return running_mean_.rows(); }
  double eps() const { return eps_; }
  bool affine() const { return affine_; }
  Var& gamma() { return gamma_; }
  Var& beta() { return beta_; }
  const Matrix& running_mean() const { return running_mean_; }
  const Matrix& running_var() const { return running_var_; }
  void set_running_stats(Matrix mean, Matrix var);

  void collect_params(ParamList& out) const;
  void export_state(StateDict& out) const;
  void import_state(const StateDict& in);

 private:
  std::string name_;
  bool affine_;
  double eps_;
  double momentum_;
  Mode mode_ = Mode::kTrain;
  Var gamma_;
  Var beta_;
  Matrix running_mean_;
  Matrix running_var_;
};

// Linear stack with ReLU between layers and an optional BatchNorm after each
// hidden linear layer.
class Mlp {
 public:
  Mlp(const std::vector<std::size_t>& dims, bool hidden_bn, Rng& rng, const std::string& name);

  Var forward(const Var& x);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  std::vector<BatchNormLayer>& norms() { return norms_; }

  void set_mode(Mode m);
  void collect_params(ParamList& out) const;
  void export_state(StateDict& out) const;
  void import_state(const StateDict& in);

 private:
  std::vector<LinearLayer> layers_;
  std::vector<BatchNormLayer> norms_;
};

struct PredictorConfig {
  std::size_t dim = 0;
  std::size_t hidden = 512;
  // Number of linear layers; 2 or 4.
  int depth = 2;
  bool hidden_bn = false;
  bool output_bn = false;
};

// f(.; theta): maps an embedding to a predicted center of the other
// same-class embeddings. Input and output dims are equal.
class CenterPredictor {
 public:
  CenterPredictor(const PredictorConfig& cfg, Rng& rng);

  Var forward(const Var& x);

  // Sets weights so that forward(x) == x exactly: the first layer emits
  // [x; -x] (plus randomly initialized spare units), the last recombines.
  // Requires hidden >= 2 * dim and no BN layers.
  void init_identity(Rng& rng);

  const PredictorConfig& config() const { return cfg_; }
  void set_mode(Mode m);
  void collect_params(ParamList& out) const;
  void export_state(StateDict& out) const;
  void import_state(const StateDict& in);

 private:
  PredictorConfig cfg_;
  Mlp body_;
  std::vector<BatchNormLayer> output_norm_;  // empty or one layer
};

// phi(.; lambda): input features -> embedding.
class FeatureExtractor {
 public:
  FeatureExtractor(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t embedding_dim, Rng& rng);

  Var forward(const Var& x) { return mlp_.forward(x); }
  std::size_t embedding_dim() const { return mlp_.out_dim(); }
  std::size_t input_dim() const { return mlp_.in_dim(); }

  void set_mode(Mode m) { mlp_.set_mode(m); }
  void collect_params(ParamList& out) const { mlp_.collect_params(out); }
  void export_state(StateDict& out) const { mlp_.export_state(out); }
  void import_state(const StateDict& in) { mlp_.import_state(in); }

 private:
  Mlp mlp_;
};

}  // namespace cplab

#endif  // CPLAB_NN_HPP_
