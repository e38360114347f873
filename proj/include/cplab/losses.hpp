#ifndef CPLAB_LOSSES_HPP_
#define CPLAB_LOSSES_HPP_

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cplab/autograd.hpp"
#include "cplab/nn.hpp"
#include "cplab/rng.hpp"

namespace cplab {

// All embedding losses take features as a dim x N Var (one sample per column)
// and one identity label per column.

struct MarginConfig {
  double triplet_margin = 0.3;
  double circle_margin = 0.25;
  double circle_scale = 64.0;  // gamma
  double lifted_margin = 1.0;
  double rll_alpha = 1.2;
  double rll_margin = 0.4;

  // Margins >= 0, gamma > 0, alpha > rll margin.
  void validate() const;
};

// Mean of -log softmax(logits)[y]; logits are C x N.
Var id_cross_entropy(const Var& logits, std::span<const int> labels);

// 1/2 * mean ||x_i - c_{y_i}||^2 with centers stored as columns (dim x C).
Var center_loss(const Var& features, std::span<const int> labels, const Var& centers);

// Batch-hard mining: per anchor the farthest positive and nearest negative
// (Euclidean), hinge with margin m, averaged over anchors.
Var triplet_loss_batch_hard(const Var& features, std::span<const int> labels, double margin);

// Per anchor log(1 + sum_n exp(g (s_n + m)) * sum_p exp(-g s_p)) on cosine
// similarities of L2-normalized features, averaged over anchors.
Var circle_loss(const Var& features, std::span<const int> labels, double gamma, double margin);

// Mean over unordered positive pairs (i, j) of
//   [D_ij + log sum_{k neg i} e^{m - D_ik} + log sum_{l neg j} e^{m - D_jl}]_+
Var lifted_structure_loss(const Var& features, std::span<const int> labels, double margin);

// Mean over ordered pairs i != j of
//   (1 - y_ij)[alpha - d_ij]_+ + y_ij [d_ij - (alpha - m)]_+
Var ranked_list_loss(const Var& features, std::span<const int> labels, double alpha,
                     double margin);

enum class TargetMode { kLeaveOneOutMean, kRandomPoint, kFarthestPoint, kSampleMean };

TargetMode parse_target_mode(std::string_view name);
std::string_view to_string(TargetMode mode);

struct CplOptions {
  TargetMode mode = TargetMode::kLeaveOneOutMean;
  bool target_bn = true;
  double bn_eps = 1e-5;
};

// Column-mixing matrix A (N x N) with targets = Z * A, where Z holds the
// (optionally batch-normalized) features. Column i of A selects or averages
// the same-class columns that form sample i's target. Every class needs >= 2
// samples. `rng` is consulted only by kRandomPoint.
Matrix cpl_target_weights(const Matrix& features, std::span<const int> labels,
                          const CplOptions& opts, Rng* rng);

// Prediction targets c_i, detached from the graph.
Var cpl_targets(const Var& features, std::span<const int> labels, const CplOptions& opts,
                Rng* rng);

// Same targets but still attached to `features`; only for contrasting the
// frozen-target gradient with the fully coupled one.
Var cpl_targets_coupled(const Var& features, std::span<const int> labels,
                        const CplOptions& opts, Rng* rng);

// sum over classes of (1/K_c) * sum_{i in c} ||p_i - t_i||^2.
Var cpl_loss_from_targets(const Var& predictions, const Var& targets,
                          std::span<const int> labels);

// Full CPL: predictions f(x_i) (or x_i itself when predictor is null, the
// "no predictor" variant) against detached targets.
Var cpl_loss(const Var& features, std::span<const int> labels, CenterPredictor* predictor,
             const CplOptions& opts, Rng* rng);

// Per-sample prediction errors e_i = ||p_i - t_i||^2 (plain values).
std::vector<double> cpl_sample_errors(const Matrix& predictions, const Matrix& targets);

struct LossBundle {
  Var total;
  std::map<std::string, double> parts;
  std::map<std::string, double> weights;
};

// total = sum_k weight_k * part_k; parts without a weight get 1.0.
// Throws TrainingDivergence when any part is NaN or infinite.
LossBundle compose_losses(const std::vector<std::pair<std::string, Var>>& parts,
                          const std::map<std::string, double>& weights);

}  // namespace cplab

#endif  // CPLAB_LOSSES_HPP_
