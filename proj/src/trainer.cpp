#include "cplab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "cplab/error.hpp"

namespace cplab {

void SgdConfig::validate() const {
  if (!(base_lr > 0.0)) throw ContractError("sgd.lr must be positive");
  if (!(decay > 0.0)) throw ContractError("sgd.decay must be positive");
  if (epochs == 0) throw ContractError("sgd.epochs must be >= 1");
  if (momentum < 0.0) throw ContractError("sgd.momentum must be >= 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] >= epochs) throw ContractError("sgd.milestones must be < epochs");
    if (i > 0 && milestones[i] <= milestones[i - 1])
      throw ContractError("sgd.milestones must be strictly increasing");
  }
}

double lr_at(const SgdConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs)
    throw ContractError("epoch " + std::to_string(epoch) + " outside schedule of " +
                        std::to_string(cfg.epochs) + " epochs");
  double lr = cfg.base_lr;
  for (std::size_t m : cfg.milestones)
    if (epoch >= m) lr *= cfg.decay;
  return lr;
}

const std::vector<std::string>& loss_part_names() {
  static const std::vector<std::string> names{"ce", "center", "triplet", "circle",
                                              "lifted", "rll", "cpl"};
  return names;
}

bool LossConfig::uses(const std::string& part) const {
  return std::find(enabled.begin(), enabled.end(), part) != enabled.end();
}

void LossConfig::validate() const {
  if (enabled.empty()) throw ContractError("at least one loss must be enabled");
  const auto& known = loss_part_names();
  for (const auto& p : enabled)
    if (std::find(known.begin(), known.end(), p) == known.end())
      throw ContractError("unknown loss '" + p + "'");
  for (const auto& [name, w] : weights) {
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ContractError("weight for unknown loss '" + name + "'");
    if (!std::isfinite(w) || w < 0.0) throw ContractError("loss weight must be finite and >= 0");
  }
  margins.validate();
}

namespace {

std::vector<std::size_t> extractor_dims(const ModelConfig& cfg) {
  if (cfg.input_dim == 0 || cfg.embedding_dim == 0 || cfg.num_classes == 0)
    throw ContractError("model dims must be set (input, embedding, classes)");
  return cfg.hidden;
}

PredictorConfig predictor_config(const ModelConfig& cfg) {
  PredictorConfig p = cfg.predictor;
  p.dim = cfg.embedding_dim;
  return p;
}

}  // namespace

Model::Model(const ModelConfig& cfg, const LossConfig& losses, std::uint64_t seed)
    : extractor([&]() -> FeatureExtractor {
        Rng rng(derive_seed(seed, "model/extractor"));
        return FeatureExtractor(cfg.input_dim, extractor_dims(cfg), cfg.embedding_dim, rng);
      }()),
      classifier([&]() -> LinearLayer {
        Rng rng(derive_seed(seed, "model/classifier"));
        return LinearLayer(cfg.embedding_dim, cfg.num_classes, rng, "classifier");
      }()),
      cfg_(cfg) {
  if (losses.uses("cpl") && losses.cpl_predictor) {
    Rng rng(derive_seed(seed, "model/predictor"));
    predictor.emplace(predictor_config(cfg), rng);
    if (cfg.identity_init_predictor) predictor->init_identity(rng);
  }
  if (losses.uses("center")) {
    centers = Var::parameter(Matrix(cfg.embedding_dim, cfg.num_classes), "center_loss.centers");
  }
}

void Model::set_mode(Mode m) {
  extractor.set_mode(m);
  if (predictor) predictor->set_mode(m);
}

ParamList Model::params() const {
  ParamList out;
  extractor.collect_params(out);
  classifier.collect_params(out);
  if (predictor) predictor->collect_params(out);
  if (centers) out.push_back({"center_loss.centers", *centers});
  return out;
}

void Model::export_state(StateDict& out) const {
  extractor.export_state(out);
  classifier.export_state(out);
  if (predictor) predictor->export_state(out);
  if (centers) out["center_loss.centers"] = centers->value();
}

void Model::import_state(const StateDict& in) {
  extractor.import_state(in);
  classifier.import_state(in);
  if (predictor) predictor->import_state(in);
  if (centers) {
    auto it = in.find("center_loss.centers");
    if (it == in.end()) throw IoError("checkpoint is missing center_loss.centers");
    if (it->second.rows() != centers->rows() || it->second.cols() != centers->cols())
      throw ShapeError("center_loss.centers: checkpoint " + it->second.shape_string());
    centers->mutable_value() = it->second;
  }
}

TrainState::TrainState(const ModelConfig& mcfg, const LossConfig& lcfg, std::uint64_t seed)
    : model(mcfg, lcfg, seed), target_rng(derive_seed(seed, "cpl/targets")) {}

namespace {

std::string describe_parts(const std::vector<std::pair<std::string, Var>>& parts, double lr) {
  std::ostringstream os;
  os << "training diverged at lr=" << format_double(lr);
  for (const auto& [name, v] : parts) os << ' ' << name << '=' << format_double(v.value().item());
  return os.str();
}

}  // namespace

LossBundle train_step(TrainState& state, const LabeledBatch& batch, const LossConfig& losses,
                      const StepSettings& settings) {
  const double lr = settings.lr;
  Model& model = state.model;
  model.set_mode(Mode::kTrain);
  Var emb = model.embed(Var::constant(batch.features));
  const auto& y = batch.labels;
  const MarginConfig& m = losses.margins;

  std::vector<std::pair<std::string, Var>> parts;
  for (const auto& name : loss_part_names()) {
    if (!losses.uses(name)) continue;
    if (name == "ce") parts.emplace_back(name, id_cross_entropy(model.classifier.forward(emb), y));
    if (name == "center") parts.emplace_back(name, center_loss(emb, y, *model.centers));
    if (name == "triplet") parts.emplace_back(name, triplet_loss_batch_hard(emb, y, m.triplet_margin));
    if (name == "circle") parts.emplace_back(name, circle_loss(emb, y, m.circle_scale, m.circle_margin));
    if (name == "lifted") parts.emplace_back(name, lifted_structure_loss(emb, y, m.lifted_margin));
    if (name == "rll") parts.emplace_back(name, ranked_list_loss(emb, y, m.rll_alpha, m.rll_margin));
    if (name == "cpl") {
      CenterPredictor* pred = model.predictor ? &*model.predictor : nullptr;
      parts.emplace_back(name, cpl_loss(emb, y, pred, losses.cpl, &state.target_rng));
    }
  }
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v.value().item())) throw TrainingDivergence(describe_parts(parts, lr));

  LossBundle bundle = compose_losses(parts, losses.weights);
  Gradients grads = backward(bundle.total);

  for (auto& [name, var] : model.params()) {
    const double step_lr = name.rfind("predictor.", 0) == 0 ? settings.predictor_lr : lr;
    Matrix g = grads.of(var);
    Matrix& v = state.velocity.try_emplace(name, g.rows(), g.cols()).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = settings.momentum * v[i] + g[i];
    Matrix& p = var.mutable_value();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step_lr * v[i];
    if (!p.all_finite())
      throw TrainingDivergence(describe_parts(parts, lr) + " (non-finite " + name + ")");
  }
  ++state.step;
  return bundle;
}

TrainResult train_run(const LabeledDataset& raw, const TrainConfig& cfg, const SnapshotFn& on_snapshot) {
  cfg.sgd.validate();
  cfg.sampler.validate();
  cfg.losses.validate();
  std::size_t classes = 0;
  const LabeledDataset ds(raw.features(), dense_labels(raw.labels(), &classes));

  ModelConfig mcfg = cfg.model;
  mcfg.input_dim = ds.dim();
  mcfg.num_classes = classes;
  TrainResult result{TrainState(mcfg, cfg.losses, cfg.seed), {}};
  TrainState& state = result.state;

  PKSamplerConfig sampler = cfg.sampler;
  sampler.seed = derive_seed(cfg.seed, "sampler");
  for (std::size_t epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
    state.epoch = epoch;
    StepSettings settings;
    settings.lr = lr_at(cfg.sgd, epoch);
    settings.predictor_lr = cfg.sgd.predictor_lr > 0.0 ? settings.lr / cfg.sgd.base_lr * cfg.sgd.predictor_lr
                                                       : settings.lr;
    settings.momentum = cfg.sgd.momentum;
    for (const LabeledBatch& batch : epoch_iter(ds, sampler, epoch)) {
      LossBundle bundle = train_step(state, batch, cfg.losses, settings);
      StepRecord rec{epoch, state.step, settings.lr, bundle.parts, bundle.total.value().item()};
      result.timeline.push_back(rec);
    }
    const bool last = epoch + 1 == cfg.sgd.epochs;
    if (on_snapshot && (last || (cfg.snapshot_every > 0 && (epoch + 1) % cfg.snapshot_every == 0)))
      on_snapshot(state, epoch + 1);
  }
  state.epoch = cfg.sgd.epochs;
  state.history = result.timeline;
  return result;
}

Matrix embed_all(Model& model, const Matrix& features) {
  model.set_mode(Mode::kEval);
  Matrix out = model.embed(Var::constant(features)).value();
  model.set_mode(Mode::kTrain);
  return out;
}

Matrix logits_all(Model& model, const Matrix& features) {
  return model.classifier.forward(Var::constant(embed_all(model, features))).value();
}

double train_accuracy(Model& model, const LabeledDataset& ds) {
  const std::vector<int> y = dense_labels(ds.labels());
  const Matrix logits = logits_all(model, ds.features());
  std::size_t correct = 0;
  for (std::size_t c = 0; c < logits.cols(); ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < logits.rows(); ++r)
      if (logits(r, c) > logits(best, c)) best = r;
    correct += static_cast<int>(best) == y[c];
  }
  return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

RefitResult refit_predictor(CenterPredictor& predictor, const Matrix& embeddings,
                            std::span<const int> labels, const RefitConfig& cfg, Rng& rng) {
  predictor.set_mode(Mode::kTrain);
  const Var x = Var::constant(embeddings);
  const Var targets = cpl_targets(x, labels, cfg.cpl, &rng);
  ParamList params;
  predictor.collect_params(params);
  std::vector<Matrix> velocity;
  for (const auto& p : params) velocity.emplace_back(p.var.rows(), p.var.cols());

  RefitResult res;
  StateDict best_state;
  double best = 0.0;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    Var loss = cpl_loss_from_targets(predictor.forward(x), targets, labels);
    const double value = loss.value().item();
    if (!std::isfinite(value))
      throw TrainingDivergence("predictor refit diverged at step " + std::to_string(step) +
                               " lr=" + format_double(cfg.lr));
    res.history.push_back(value);
    if (step == 0) res.initial_cpl = value;
    if (step == 0 || value < best) {
      best = value;
      best_state.clear();
      predictor.export_state(best_state);
    }
    if (step == cfg.steps) break;
    Gradients grads = backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix g = grads.of(params[k].var);
      Matrix& v = velocity[k];
      Matrix& p = params[k].var.mutable_value();
      for (std::size_t i = 0; i < g.size(); ++i) {
        v[i] = cfg.momentum * v[i] + g[i];
        p[i] -= cfg.lr * v[i];
      }
    }
  }
  predictor.import_state(best_state);
  res.final_cpl = best;
  return res;
}

void write_timeline_csv(std::ostream& os, const std::vector<StepRecord>& timeline,
                        const LossConfig& losses) {
  std::vector<std::string> cols;
  for (const auto& name : loss_part_names())
    if (losses.uses(name)) cols.push_back(name);
  os << "epoch,step,lr";
  for (const auto& c : cols) os << ',' << c;
  os << ",total\n";
  for (const auto& r : timeline) {
    os << r.epoch << ',' << r.step << ',' << format_double(r.lr);
    for (const auto& c : cols) os << ',' << format_double(r.parts.at(c));
    os << ',' << format_double(r.total) << '\n';
  }
}

}  // namespace cplab
