#ifndef CPLAB_TRAINER_HPP_
#define CPLAB_TRAINER_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cplab/dataset.hpp"
#include "cplab/losses.hpp"
#include "cplab/nn.hpp"
#include "cplab/sampling.hpp"

namespace cplab {

struct SgdConfig {
  double base_lr = 3.5e-4;
  std::vector<std::size_t> milestones{10, 20};
  double decay = 0.1;
  std::size_t epochs = 30;
  double momentum = 0.9;
  // <= 0: the predictor follows the shared schedule. Otherwise its base lr,
  // decayed at the same milestones.
  double predictor_lr = 0.0;

  void validate() const;
};

// base_lr times decay once per milestone <= epoch (repeated multiplication).
double lr_at(const SgdConfig& cfg, std::size_t epoch);

// Loss part names: ce, center, triplet, circle, lifted, rll, cpl.
const std::vector<std::string>& loss_part_names();

struct LossConfig {
  std::vector<std::string> enabled{"ce"};
  std::map<std::string, double> weights;  // missing entries weigh 1.0
  MarginConfig margins;
  CplOptions cpl;
  // Off: CPL compares embeddings directly with their targets (no predictor).
  bool cpl_predictor = true;

  bool uses(const std::string& part) const;
  void validate() const;
};

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64};
  std::size_t embedding_dim = 16;
  std::size_t num_classes = 0;
  // dim is taken from embedding_dim.
  PredictorConfig predictor;
  bool identity_init_predictor = false;
};

// Extractor, classifier on the embedding, optional predictor and centers.
class Model {
 public:
  Model(const ModelConfig& cfg, const LossConfig& losses, std::uint64_t seed);

  Var embed(const Var& x) { return extractor.forward(x); }
  void set_mode(Mode m);
  // All trainable parameters; predictor parameters carry the "predictor." prefix.
  ParamList params() const;
  void export_state(StateDict& out) const;
  void import_state(const StateDict& in);
  const ModelConfig& config() const { return cfg_; }

  FeatureExtractor extractor;
  LinearLayer classifier;
  std::optional<CenterPredictor> predictor;
  std::optional<Var> centers;  // embedding_dim x num_classes

 private:
  ModelConfig cfg_;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  std::map<std::string, double> parts;
  double total = 0.0;
};

struct TrainState {
  TrainState(const ModelConfig& mcfg, const LossConfig& lcfg, std::uint64_t seed);

  Model model;
  std::map<std::string, Matrix> velocity;
  std::size_t epoch = 0;
  std::size_t step = 0;
  Rng target_rng;  // random-point CPL targets
  std::vector<StepRecord> history;
};

struct StepSettings {
  double lr = 0.0;
  double predictor_lr = 0.0;
  double momentum = 0.9;
};

// One forward/backward/momentum-SGD update (v = mu v + g; p -= lr v) on every
// parameter. Batch labels must already be dense class indices. Throws
// TrainingDivergence (with the lr and every part value in the message) on a
// non-finite loss or parameter.
LossBundle train_step(TrainState& state, const LabeledBatch& batch, const LossConfig& losses,
                      const StepSettings& settings);

struct TrainConfig {
  ModelConfig model;
  LossConfig losses;
  SgdConfig sgd;
  PKSamplerConfig sampler;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 5;
};

struct TrainResult {
  TrainState state;
  std::vector<StepRecord> timeline;
};

using SnapshotFn = std::function<void(const TrainState&, std::size_t epoch)>;

// Dataset labels are remapped densely (ascending) before training; the model's
// input_dim and num_classes are filled in from the data. on_snapshot runs after
// every snapshot_every-th epoch and after the last one.
TrainResult train_run(const LabeledDataset& ds, const TrainConfig& cfg,
                      const SnapshotFn& on_snapshot = {});

// Embeddings (eval mode) of every record, dim x N.
Matrix embed_all(Model& model, const Matrix& features);
// Classifier logits (eval mode), classes x N.
Matrix logits_all(Model& model, const Matrix& features);
double train_accuracy(Model& model, const LabeledDataset& ds);

struct RefitConfig {
  std::size_t steps = 1000;
  double lr = 0.003;
  double momentum = 0.9;
  CplOptions cpl{TargetMode::kLeaveOneOutMean, false, 1e-5};
};

struct RefitResult {
  double initial_cpl = 0.0;
  double final_cpl = 0.0;  // best value reached; the predictor is left at that point
  std::vector<double> history;
};

// Full-batch momentum SGD on the predictor only, with frozen embeddings and
// targets computed once. Each distinct label forms one group.
RefitResult refit_predictor(CenterPredictor& predictor, const Matrix& embeddings,
                            std::span<const int> labels, const RefitConfig& cfg, Rng& rng);

// Timeline CSV: epoch,step,lr,<part...>,total with parts in loss_part_names order.
void write_timeline_csv(std::ostream& os, const std::vector<StepRecord>& timeline,
                        const LossConfig& losses);

}  // namespace cplab

#endif  // CPLAB_TRAINER_HPP_
