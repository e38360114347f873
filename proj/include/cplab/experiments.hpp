#ifndef CPLAB_EXPERIMENTS_HPP_
#define CPLAB_EXPERIMENTS_HPP_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cplab/config.hpp"
#include "cplab/metrics.hpp"
#include "cplab/trainer.hpp"

namespace cplab {

// Dataset named by cfg.data; fixtures draw from derive_seed(cfg.seed, "data").
LabeledDataset load_dataset(const ExperimentConfig& cfg);

struct SurfacePoint {
  double x = 0.0;
  double y = 0.0;
  int label = 0;
  double error = 0.0;  // e_i
  bool boundary = false;
};

struct SurfaceGrid {
  std::vector<SurfacePoint> points;
  std::string loss_kind;
  std::uint64_t seed = 0;
};

// Mean e_i per label.
std::map<int, double> class_mean_errors(const SurfaceGrid& grid);
// CSV "x,y,label,e_i,boundary", one row per sample in dataset order.
void write_surface_csv(std::ostream& os, const SurfaceGrid& grid);

struct SurfaceResult {
  SurfaceGrid grid;
  RefitResult refit;  // empty for the center loss
};

// center: e_i = ||x_i - mean of its class||^2.
// cpl: an identity-initialized predictor is refit on the whole dataset (each
// class one group, leave-one-out targets) and e_i = ||f(x_i) - c_i||^2.
SurfaceResult run_loss_surface(const LabeledDataset& ds, const std::string& loss_kind,
                               std::uint64_t seed, const RefitConfig& refit,
                               std::size_t predictor_hidden);

struct BoundaryResult {
  SurfaceGrid grid;  // points are the L2-normalized embeddings
  double boundary_mean = 0.0;
  double interior_mean = 0.0;
  double ratio = 0.0;
  double accuracy = 0.0;
  std::vector<StepRecord> timeline;
  RefitResult refit;
};

// Trains the configured model (2-D embedding) on ds, normalizes the
// embeddings, refits a predictor on them to get e_i, and flags the
// lowest-margin fraction (cfg.boundary_band) of samples as the boundary band.
BoundaryResult run_boundary_experiment(const LabeledDataset& ds, const ExperimentConfig& cfg);

struct RetrievalSplit {
  LabeledDataset train;
  LabeledBatch query;
  LabeledBatch gallery;
};

// The first train_identities identities (ascending id) train; of every other
// identity the first quarter of its records (at least one) are queries and the
// rest gallery.
RetrievalSplit split_retrieval(const LabeledDataset& ds, std::size_t train_identities);

struct RetrievalRun {
  RankingResult ranking;
  std::vector<StepRecord> timeline;
};

RetrievalRun run_retrieval(const RetrievalSplit& split, const ExperimentConfig& cfg);

struct AblationRow {
  std::string variant;
  double map = 0.0;
  double rank1 = 0.0;
  std::string config_text;  // resolved config of the variant, without output.dir
  std::string config_hash;
  std::vector<StepRecord> timeline;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// The variant configs: kind train, one seed per variant derived from the
// base seed and the variant name.
std::vector<std::pair<std::string, ExperimentConfig>> target_ablation_variants(const ExperimentConfig& cfg);
std::vector<std::pair<std::string, ExperimentConfig>> bn_ablation_variants(const ExperimentConfig& cfg);

AblationReport run_target_ablation(const ExperimentConfig& cfg);
AblationReport run_bn_ablation(const ExperimentConfig& cfg);

// CSV "variant,mAP,rank1,config_hash".
void write_report_csv(std::ostream& os, const AblationReport& report);

}  // namespace cplab

#endif  // CPLAB_EXPERIMENTS_HPP_
