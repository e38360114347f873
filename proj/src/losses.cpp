#include "cplab/losses.hpp"

#include <cmath>

#include "cplab/dataset.hpp"
#include "cplab/error.hpp"

namespace cplab {
namespace {

void require_labels(const Var& features, std::span<const int> labels, const char* loss) {
  if (labels.size() != features.cols()) {
    throw ShapeError(std::string(loss) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.cols()) + " samples");
  }
}

// 1 where labels match, diagonal included.
Matrix same_label_mask(std::span<const int> labels) {
  const std::size_t n = labels.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return m;
}

Matrix positive_mask(std::span<const int> labels) {
  Matrix m = same_label_mask(labels);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, i) = 0.0;
  return m;
}

Matrix negative_mask(std::span<const int> labels) {
  Matrix m = same_label_mask(labels);
  for (double& v : m.data()) v = 1.0 - v;
  return m;
}

// Requires every anchor to have at least one positive and one negative.
void require_pos_and_neg(std::span<const int> labels, const char* loss) {
  auto groups = group_by_label(labels);
  if (groups.size() < 2) {
    throw ContractError(std::string(loss) + ": batch needs at least 2 identities");
  }
  for (const auto& g : groups) {
    if (g.size() < 2) {
      throw ContractError(std::string(loss) + ": identity " + std::to_string(labels[g.front()]) +
                          " has a single instance, no positive to mine");
    }
  }
}

Var euclidean_distances(const Var& features) { return safe_sqrt(pairwise_sq_dists(features)); }

}  // namespace

void MarginConfig::validate() const {
  if (triplet_margin < 0.0) throw ContractError("triplet margin must be >= 0");
  if (circle_margin < 0.0) throw ContractError("circle margin must be >= 0");
  if (!(circle_scale > 0.0)) throw ContractError("circle scale gamma must be > 0");
  if (lifted_margin < 0.0) throw ContractError("lifted-structure margin must be >= 0");
  if (rll_margin < 0.0) throw ContractError("RLL margin must be >= 0");
  if (!(rll_alpha > rll_margin)) throw ContractError("RLL alpha must exceed m");
}

Var id_cross_entropy(const Var& logits, std::span<const int> labels) {
  return cross_entropy(logits, labels);
}

Var center_loss(const Var& features, std::span<const int> labels, const Var& centers) {
  require_labels(features, labels, "center loss");
  if (centers.rows() != features.rows()) {
    throw ShapeError("center loss: centers are " + std::to_string(centers.rows()) +
                     "-dim, features " + std::to_string(features.rows()) + "-dim");
  }
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= centers.cols()) {
      throw ContractError("center loss: no center for label " + std::to_string(labels[i]));
    }
    idx[i] = static_cast<std::size_t>(labels[i]);
  }
  Var diff = sub(features, gather_cols(centers, idx));
  return scale(sum(square(diff)), 0.5 / static_cast<double>(labels.size()));
}

Var triplet_loss_batch_hard(const Var& features, std::span<const int> labels, double margin) {
  require_labels(features, labels, "triplet loss");
  require_pos_and_neg(labels, "triplet loss");
  Var d = euclidean_distances(features);
  Var hardest_pos = masked_row_max(d, positive_mask(labels));
  Var hardest_neg = masked_row_min(d, negative_mask(labels));
  return mean(relu(add_scalar(sub(hardest_pos, hardest_neg), margin)));
}

Var circle_loss(const Var& features, std::span<const int> labels, double gamma, double margin) {
  require_labels(features, labels, "circle loss");
  require_pos_and_neg(labels, "circle loss");
  if (!(gamma > 0.0)) throw ContractError("circle loss: gamma must be > 0");
  Var xn = l2_normalize_cols(features);
  Var sim = matmul(transpose(xn), xn);
  Var neg_term = masked_row_logsumexp(add_scalar(scale(sim, gamma), gamma * margin),
                                      negative_mask(labels));
  Var pos_term = masked_row_logsumexp(scale(sim, -gamma), positive_mask(labels));
  return mean(softplus(add(neg_term, pos_term)));
}

Var lifted_structure_loss(const Var& features, std::span<const int> labels, double margin) {
  require_labels(features, labels, "lifted structure loss");
  const std::size_t n = labels.size();
  Matrix pairs(n, n);
  double num_pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) {
        pairs(i, j) = 1.0;
        num_pairs += 1.0;
      }
    }
  }
  if (num_pairs == 0.0) throw ContractError("lifted structure loss: no positive pairs");
  if (group_by_label(labels).size() < 2) {
    throw ContractError("lifted structure loss: no negative pairs");
  }
  Var d = euclidean_distances(features);
  Var neg_lse = masked_row_logsumexp(add_scalar(-d, margin), negative_mask(labels));
  Var j = add_row_broadcast(add_col_broadcast(d, neg_lse), transpose(neg_lse));
  return scale(sum(mul(relu(j), Var::constant(pairs))), 1.0 / num_pairs);
}

Var ranked_list_loss(const Var& features, std::span<const int> labels, double alpha,
                     double margin) {
  require_labels(features, labels, "ranked list loss");
  if (!(alpha > margin)) throw ContractError("ranked list loss: alpha must exceed m");
  const std::size_t n = labels.size();
  if (n < 2) throw ContractError("ranked list loss: needs at least 2 samples");
  Var d = euclidean_distances(features);
  Var neg = mul(relu(add_scalar(-d, alpha)), Var::constant(negative_mask(labels)));
  Var pos = mul(relu(add_scalar(d, -(alpha - margin))), Var::constant(positive_mask(labels)));
  return scale(sum(add(neg, pos)), 1.0 / static_cast<double>(n * (n - 1)));
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "leave-one-out-mean") return TargetMode::kLeaveOneOutMean;
  if (name == "random-point") return TargetMode::kRandomPoint;
  if (name == "farthest-point") return TargetMode::kFarthestPoint;
  if (name == "sample-mean") return TargetMode::kSampleMean;
  throw ContractError("unknown CPL target mode '" + std::string(name) + "'");
}

std::string_view to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::kLeaveOneOutMean: return "leave-one-out-mean";
    case TargetMode::kRandomPoint: return "random-point";
    case TargetMode::kFarthestPoint: return "farthest-point";
    case TargetMode::kSampleMean: return "sample-mean";
  }
  return "?";
}

Matrix cpl_target_weights(const Matrix& features, std::span<const int> labels,
                          const CplOptions& opts, Rng* rng) {
  const std::size_t n = labels.size();
  if (features.cols() != n) throw ShapeError("CPL targets: label count does not match batch");
  Matrix a(n, n);
  for (const auto& group : group_by_label(labels)) {
    const std::size_t k = group.size();
    if (k < 2) {
      throw ContractError("CPL needs K >= 2 samples per identity; identity " +
                          std::to_string(labels[group.front()]) + " has 1");
    }
    for (std::size_t i : group) {
      switch (opts.mode) {
        case TargetMode::kLeaveOneOutMean:
          for (std::size_t j : group)
            if (j != i) a(j, i) = 1.0 / static_cast<double>(k - 1);
          break;
        case TargetMode::kSampleMean:
          for (std::size_t j : group) a(j, i) = 1.0 / static_cast<double>(k);
          break;
        case TargetMode::kRandomPoint: {
          if (!rng) throw ContractError("random-point CPL targets need an RNG");
          std::size_t pick = static_cast<std::size_t>(rng->below(k - 1));
          std::size_t chosen = 0;
          for (std::size_t j : group) {
            if (j == i) continue;
            if (pick-- == 0) {
              chosen = j;
              break;
            }
          }
          a(chosen, i) = 1.0;
          break;
        }
        case TargetMode::kFarthestPoint: {
          std::size_t best = 0;
          double best_d = -1.0;
          for (std::size_t j : group) {
            if (j == i) continue;
            double d = 0.0;
            for (std::size_t r = 0; r < features.rows(); ++r) {
              double diff = features(r, i) - features(r, j);
              d += diff * diff;
            }
            if (d > best_d) {
              best_d = d;
              best = j;
            }
          }
          a(best, i) = 1.0;
          break;
        }
      }
    }
  }
  return a;
}

namespace {

Var build_targets(const Var& features, std::span<const int> labels, const CplOptions& opts,
                  Rng* rng) {
  Var z = opts.target_bn ? batch_norm_normalize(features, opts.bn_eps) : features;
  Matrix weights = cpl_target_weights(z.value(), labels, opts, rng);
  return matmul(z, Var::constant(std::move(weights)));
}

}  // namespace

Var cpl_targets(const Var& features, std::span<const int> labels, const CplOptions& opts,
                Rng* rng) {
  return detach(build_targets(features, labels, opts, rng));
}

Var cpl_targets_coupled(const Var& features, std::span<const int> labels,
                        const CplOptions& opts, Rng* rng) {
  return build_targets(features, labels, opts, rng);
}

Var cpl_loss_from_targets(const Var& predictions, const Var& targets,
                          std::span<const int> labels) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw ShapeError("CPL: predictions " + predictions.value().shape_string() + " vs targets " +
                     targets.value().shape_string());
  }
  if (labels.size() != predictions.cols()) throw ShapeError("CPL: label count does not match batch");
  Matrix class_weight(1, labels.size());
  for (const auto& group : group_by_label(labels)) {
    for (std::size_t i : group) class_weight[i] = 1.0 / static_cast<double>(group.size());
  }
  Var per_sample = col_sum(square(sub(predictions, targets)));
  return sum(mul(per_sample, Var::constant(std::move(class_weight))));
}

Var cpl_loss(const Var& features, std::span<const int> labels, CenterPredictor* predictor,
             const CplOptions& opts, Rng* rng) {
  require_labels(features, labels, "CPL");
  Var targets = cpl_targets(features, labels, opts, rng);
  Var predictions = predictor ? predictor->forward(features) : features;
  return cpl_loss_from_targets(predictions, targets, labels);
}

std::vector<double> cpl_sample_errors(const Matrix& predictions, const Matrix& targets) {
  require_same_shape(predictions, targets, "CPL sample errors");
  std::vector<double> e(predictions.cols(), 0.0);
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    for (std::size_t c = 0; c < predictions.cols(); ++c) {
      double diff = predictions(r, c) - targets(r, c);
      e[c] += diff * diff;
    }
  }
  return e;
}

LossBundle compose_losses(const std::vector<std::pair<std::string, Var>>& parts,
                          const std::map<std::string, double>& weights) {
  if (parts.empty()) throw ContractError("compose_losses: no loss parts");
  LossBundle bundle;
  std::string diagnostics;
  bool diverged = false;
  for (const auto& [name, part] : parts) {
    if (part.rows() != 1 || part.cols() != 1) {
      throw ShapeError("loss part '" + name + "' is not a scalar");
    }
    const double v = part.value().item();
    auto it = weights.find(name);
    const double w = it == weights.end() ? 1.0 : it->second;
    bundle.parts[name] = v;
    bundle.weights[name] = w;
    diagnostics += " " + name + "=" + format_double(v);
    if (!std::isfinite(v)) diverged = true;
    Var term = scale(part, w);
    bundle.total = bundle.total ? add(bundle.total, term) : term;
  }
  if (diverged) throw TrainingDivergence("non-finite loss part:" + diagnostics);
  return bundle;
}

}  // namespace cplab
