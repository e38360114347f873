#include "cplab/nn.hpp"

#include <cmath>

#include "cplab/error.hpp"

namespace cplab {
namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

const Matrix& lookup(const StateDict& in, const std::string& key, const Matrix& like) {
  auto it = in.find(key);
  if (it == in.end()) throw IoError("checkpoint is missing entry '" + key + "'");
  if (it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
    throw ShapeError("checkpoint entry '" + key + "' has shape " + it->second.shape_string() +
                     ", expected " + like.shape_string());
  }
  return it->second;
}

}  // namespace

LinearLayer::LinearLayer(std::size_t in_dim, std::size_t out_dim, Rng& rng, std::string name)
    : name_(std::move(name)) {
  if (in_dim == 0 || out_dim == 0) throw ContractError("linear layer dims must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(in_dim));
  weight_ = Var::parameter(uniform_matrix(out_dim, in_dim, bound, rng), name_ + ".weight");
  bias_ = Var::parameter(uniform_matrix(out_dim, 1, bound, rng), name_ + ".bias");
}

LinearLayer::LinearLayer(Matrix weight, Matrix bias, std::string name) : name_(std::move(name)) {
  if (bias.rows() != weight.rows() || bias.cols() != 1) {
    throw ShapeError("bias " + bias.shape_string() + " does not fit weight " +
                     weight.shape_string());
  }
  weight_ = Var::parameter(std::move(weight), name_ + ".weight");
  bias_ = Var::parameter(std::move(bias), name_ + ".bias");
}

Var LinearLayer::forward(const Var& x) const {
  if (x.rows() != in_dim()) {
    throw ShapeError(name_ + ": input has " + std::to_string(x.rows()) +
                     " features, layer expects " + std::to_string(in_dim()));
  }
  return add_col_broadcast(matmul(weight_, x), bias_);
}

void LinearLayer::collect_params(ParamList& out) const {
  out.push_back({weight_.name(), weight_});
  out.push_back({bias_.name(), bias_});
}

void LinearLayer::export_state(StateDict& out) const {
  out[weight_.name()] = weight_.value();
  out[bias_.name()] = bias_.value();
}

void LinearLayer::import_state(const StateDict& in) {
  weight_.mutable_value() = lookup(in, weight_.name(), weight_.value());
  bias_.mutable_value() = lookup(in, bias_.name(), bias_.value());
}

BatchNormLayer::BatchNormLayer(std::size_t dim, std::string name, bool affine, double eps,
                               double momentum)
    : name_(std::move(name)),
      affine_(affine),
      eps_(eps),
      momentum_(momentum),
      running_mean_(dim, 1, 0.0),
      running_var_(dim, 1, 1.0) {
  if (!(eps > 0.0)) throw ContractError("batch norm epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ContractError("batch norm momentum must be in (0,1)");
  if (affine_) {
    gamma_ = Var::parameter(Matrix(dim, 1, 1.0), name_ + ".gamma");
    beta_ = Var::parameter(Matrix(dim, 1, 0.0), name_ + ".beta");
  }
}

void BatchNormLayer::set_running_stats(Matrix mean, Matrix var) {
  require_same_shape(mean, running_mean_, "running mean");
  require_same_shape(var, running_var_, "running var");
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
}

Var BatchNormLayer::forward(const Var& x) {
  if (x.rows() != dim()) {
    throw ShapeError(name_ + ": input has " + std::to_string(x.rows()) +
                     " features, expected " + std::to_string(dim()));
  }
  Var normalized;
  if (mode_ == Mode::kTrain) {
    normalized = batch_norm_normalize(x, eps_);
    const Matrix& xv = x.value();
    const double n = static_cast<double>(xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      double mu = 0.0;
      for (std::size_t c = 0; c < xv.cols(); ++c) mu += xv(r, c);
      mu /= n;
      double var = 0.0;
      for (std::size_t c = 0; c < xv.cols(); ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
      var /= n - 1.0;
      running_mean_[r] = (1.0 - momentum_) * running_mean_[r] + momentum_ * mu;
      running_var_[r] = (1.0 - momentum_) * running_var_[r] + momentum_ * var;
    }
  } else {
    Matrix inv(dim(), 1), shift(dim(), 1);
    for (std::size_t r = 0; r < dim(); ++r) {
      inv[r] = 1.0 / std::sqrt(running_var_[r] + eps_);
      shift[r] = -running_mean_[r] * inv[r];
    }
    normalized = add_col_broadcast(mul_col_broadcast(x, Var::constant(inv)), Var::constant(shift));
  }
  if (!affine_) return normalized;
  return add_col_broadcast(mul_col_broadcast(normalized, gamma_), beta_);
}

void BatchNormLayer::collect_params(ParamList& out) const {
  if (!affine_) return;
  out.push_back({gamma_.name(), gamma_});
  out.push_back({beta_.name(), beta_});
}

void BatchNormLayer::export_state(StateDict& out) const {
  if (affine_) {
    out[gamma_.name()] = gamma_.value();
    out[beta_.name()] = beta_.value();
  }
  out[name_ + ".running_mean"] = running_mean_;
  out[name_ + ".running_var"] = running_var_;
}

void BatchNormLayer::import_state(const StateDict& in) {
  if (affine_) {
    gamma_.mutable_value() = lookup(in, gamma_.name(), gamma_.value());
    beta_.mutable_value() = lookup(in, beta_.name(), beta_.value());
  }
  running_mean_ = lookup(in, name_ + ".running_mean", running_mean_);
  running_var_ = lookup(in, name_ + ".running_var", running_var_);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, bool hidden_bn, Rng& rng, const std::string& name) {
  if (dims.size() < 2) throw ContractError("an MLP needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(dims[i], dims[i + 1], rng, name + ".fc" + std::to_string(i));
    if (hidden_bn && i + 2 < dims.size()) {
      norms_.emplace_back(dims[i + 1], name + ".bn" + std::to_string(i));
    }
  }
}

Var Mlp::forward(const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) {
      if (!norms_.empty()) h = norms_[i].forward(h);
      h = relu(h);
    }
  }
  return h;
}

void Mlp::set_mode(Mode m) {
  for (auto& bn : norms_) bn.set_mode(m);
}

void Mlp::collect_params(ParamList& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect_params(out);
    if (i < norms_.size()) norms_[i].collect_params(out);
  }
}

void Mlp::export_state(StateDict& out) const {
  for (const auto& l : layers_) l.export_state(out);
  for (const auto& bn : norms_) bn.export_state(out);
}

void Mlp::import_state(const StateDict& in) {
  for (auto& l : layers_) l.import_state(in);
  for (auto& bn : norms_) bn.import_state(in);
}

namespace {

std::vector<std::size_t> predictor_dims(const PredictorConfig& cfg) {
  if (cfg.depth != 2 && cfg.depth != 4) {
    throw ContractError("center predictor depth must be 2 or 4, got " +
                        std::to_string(cfg.depth));
  }
  if (cfg.dim == 0 || cfg.hidden == 0) throw ContractError("center predictor dims must be positive");
  std::vector<std::size_t> dims{cfg.dim};
  for (int i = 0; i + 1 < cfg.depth; ++i) dims.push_back(cfg.hidden);
  dims.push_back(cfg.dim);
  return dims;
}

}  // namespace

CenterPredictor::CenterPredictor(const PredictorConfig& cfg, Rng& rng)
    : cfg_(cfg), body_(predictor_dims(cfg), cfg.hidden_bn, rng, "predictor") {
  if (cfg_.output_bn) output_norm_.emplace_back(cfg_.dim, "predictor.bn_out");
}

Var CenterPredictor::forward(const Var& x) {
  if (x.rows() != cfg_.dim) {
    throw ShapeError("center predictor expects " + std::to_string(cfg_.dim) +
                     "-dim embeddings, got " + std::to_string(x.rows()));
  }
  Var out = body_.forward(x);
  if (!output_norm_.empty()) out = output_norm_.front().forward(out);
  return out;
}

void CenterPredictor::init_identity(Rng& rng) {
  if (cfg_.hidden_bn || cfg_.output_bn) {
    throw ContractError("identity initialization needs a predictor without BN layers");
  }
  const std::size_t d = cfg_.dim, h = cfg_.hidden;
  if (h < 2 * d) throw ContractError("identity initialization needs hidden >= 2 * dim");
  auto& layers = body_.layers();
  const double bound = std::sqrt(1.0 / static_cast<double>(d));

  Matrix w_in(h, d), b_in(h, 1);
  for (std::size_t i = 0; i < d; ++i) {
    w_in(i, i) = 1.0;
    w_in(d + i, i) = -1.0;
  }
  // Spare units keep random input weights so they can still learn; their
  // outgoing weights start at zero, which keeps the map exact.
  for (std::size_t r = 2 * d; r < h; ++r)
    for (std::size_t c = 0; c < d; ++c) w_in(r, c) = rng.uniform(-bound, bound);
  layers.front().weight().mutable_value() = w_in;
  layers.front().bias().mutable_value() = b_in;

  for (std::size_t i = 1; i + 1 < layers.size(); ++i) {
    layers[i].weight().mutable_value() = Matrix::identity(h);
    layers[i].bias().mutable_value() = Matrix(h, 1);
  }

  Matrix w_out(d, h);
  for (std::size_t i = 0; i < d; ++i) {
    w_out(i, i) = 1.0;
    w_out(i, d + i) = -1.0;
  }
  layers.back().weight().mutable_value() = w_out;
  layers.back().bias().mutable_value() = Matrix(d, 1);
}

void CenterPredictor::set_mode(Mode m) {
  body_.set_mode(m);
  for (auto& bn : output_norm_) bn.set_mode(m);
}

void CenterPredictor::collect_params(ParamList& out) const {
  body_.collect_params(out);
  for (const auto& bn : output_norm_) bn.collect_params(out);
}

void CenterPredictor::export_state(StateDict& out) const {
  body_.export_state(out);
  for (const auto& bn : output_norm_) bn.export_state(out);
}

void CenterPredictor::import_state(const StateDict& in) {
  body_.import_state(in);
  for (auto& bn : output_norm_) bn.import_state(in);
}

namespace {

std::vector<std::size_t> extractor_dims(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                        std::size_t embedding_dim) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(embedding_dim);
  return dims;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                   std::size_t embedding_dim, Rng& rng)
    : mlp_(extractor_dims(input_dim, hidden, embedding_dim), false, rng, "extractor") {}

}  // namespace cplab
