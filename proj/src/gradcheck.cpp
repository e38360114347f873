#include "cplab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cplab/error.hpp"
#include "cplab/losses.hpp"
#include "cplab/nn.hpp"
#include "cplab/rng.hpp"

namespace cplab {

Matrix numeric_gradient(const ScalarFn& f, Var& leaf, double step) {
  Matrix& v = leaf.mutable_value();
  Matrix g(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + step;
    const double up = f().value().item();
    v[i] = orig - step;
    const double down = f().value().item();
    v[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "relative_error");
  const double scale = std::max({max_abs(analytic), max_abs(numeric), 1e-8});
  return max_abs(analytic - numeric) / scale;
}

double relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: leaf count mismatch");
  double diff = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    require_same_shape(analytic[i], numeric[i], "relative_error");
    diff = std::max(diff, max_abs(analytic[i] - numeric[i]));
    scale = std::max({scale, max_abs(analytic[i]), max_abs(numeric[i])});
  }
  return diff / scale;
}

double check_gradients(const ScalarFn& f, std::vector<Var> leaves, double step) {
  Gradients grads = backward(f());
  std::vector<Matrix> analytic, numeric;
  for (Var& leaf : leaves) {
    analytic.push_back(grads.of(leaf));
    numeric.push_back(numeric_gradient(f, leaf, step));
  }
  return relative_error(analytic, numeric);
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// P identities x K instances, grouped.
std::vector<int> pk_labels(std::size_t p, std::size_t k) {
  std::vector<int> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i));
  return labels;
}

// Random linear readout sum(op(x) .* R), so every output entry matters.
Var readout(const Var& out, const Matrix& weights) { return sum(mul(out, Var::constant(weights))); }

using UnaryOp = Var (*)(const Var&);

GradCheckCase unary_case(std::string name, UnaryOp op, double lo, double hi) {
  return {name, [op, lo, hi, name](std::uint64_t seed) {
            Rng rng(derive_seed(seed, name));
            Var x = Var::parameter(random_matrix(3, 4, rng, lo, hi));
            Var probe = op(x);
            Matrix r = random_matrix(probe.rows(), probe.cols(), rng);
            return check_gradients([&] { return readout(op(x), r); }, {x});
          }};
}

GradCheckCase loss_case(std::string name, std::function<Var(const Var&, std::span<const int>)> loss) {
  return {name, [loss, name](std::uint64_t seed) {
            Rng rng(derive_seed(seed, name));
            auto labels = pk_labels(3, 3);
            Var x = Var::parameter(random_matrix(4, labels.size(), rng));
            return check_gradients([&] { return loss(x, labels); }, {x});
          }};
}

std::vector<Var> param_vars(const ParamList& params) {
  std::vector<Var> out;
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

std::vector<GradCheckCase> build_registry() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"matmul", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "matmul"));
                     Var a = Var::parameter(random_matrix(3, 4, rng));
                     Var b = Var::parameter(random_matrix(4, 2, rng));
                     Matrix r = random_matrix(3, 2, rng);
                     return check_gradients([&] { return readout(matmul(a, b), r); }, {a, b});
                   }});
  cases.push_back({"broadcast", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "broadcast"));
                     Var a = Var::parameter(random_matrix(3, 4, rng));
                     Var c = Var::parameter(random_matrix(3, 1, rng));
                     Var r = Var::parameter(random_matrix(1, 4, rng));
                     Matrix w = random_matrix(3, 4, rng);
                     return check_gradients(
                         [&] {
                           Var y = mul_col_broadcast(add_col_broadcast(a, c), c);
                           y = mul_row_broadcast(add_row_broadcast(y, r), r);
                           return readout(y, w);
                         },
                         {a, c, r});
                   }});
  cases.push_back(unary_case("relu", &relu, -2.0, 2.0));
  cases.push_back(unary_case("square", &square, -2.0, 2.0));
  cases.push_back(unary_case("exp", &exp, -2.0, 2.0));
  cases.push_back(unary_case("log", &log, 0.2, 2.0));
  cases.push_back(unary_case("softplus", &softplus, -2.0, 2.0));
  cases.push_back(unary_case("safe_sqrt", &safe_sqrt, 0.2, 2.0));
  cases.push_back(unary_case("transpose", &transpose, -2.0, 2.0));
  cases.push_back({"l2_normalize_cols", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "l2_normalize_cols"));
                     Var x = Var::parameter(random_matrix(3, 4, rng));
                     Matrix r = random_matrix(3, 4, rng);
                     return check_gradients([&] { return readout(l2_normalize_cols(x), r); }, {x});
                   }});
  cases.push_back({"pairwise_sq_dists", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "pairwise_sq_dists"));
                     Var x = Var::parameter(random_matrix(3, 5, rng));
                     Matrix r = random_matrix(5, 5, rng);
                     return check_gradients([&] { return readout(pairwise_sq_dists(x), r); }, {x});
                   }});
  cases.push_back({"masked_row_logsumexp", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "masked_row_logsumexp"));
                     Var x = Var::parameter(random_matrix(4, 5, rng));
                     Matrix mask(4, 5);
                     for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3 != 1) ? 1.0 : 0.0;
                     Matrix r = random_matrix(4, 1, rng);
                     return check_gradients([&] { return readout(masked_row_logsumexp(x, mask), r); },
                                            {x});
                   }});
  cases.push_back({"linear", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "linear"));
                     LinearLayer layer(4, 3, rng, "fc");
                     Var x = Var::parameter(random_matrix(4, 5, rng));
                     Matrix r = random_matrix(3, 5, rng);
                     return check_gradients([&] { return readout(layer.forward(x), r); },
                                            {x, layer.weight(), layer.bias()});
                   }});
  cases.push_back({"batchnorm_train", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "batchnorm_train"));
                     BatchNormLayer bn(3, "bn");
                     bn.gamma().mutable_value() = random_matrix(3, 1, rng);
                     bn.beta().mutable_value() = random_matrix(3, 1, rng);
                     Var x = Var::parameter(random_matrix(3, 6, rng));
                     Matrix r = random_matrix(3, 6, rng);
                     return check_gradients([&] { return readout(bn.forward(x), r); },
                                            {x, bn.gamma(), bn.beta()});
                   }});
  cases.push_back({"batchnorm_eval", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "batchnorm_eval"));
                     BatchNormLayer bn(3, "bn");
                     bn.set_running_stats(random_matrix(3, 1, rng), random_matrix(3, 1, rng, 0.5, 2.0));
                     bn.gamma().mutable_value() = random_matrix(3, 1, rng);
                     bn.set_mode(Mode::kEval);
                     Var x = Var::parameter(random_matrix(3, 4, rng));
                     Matrix r = random_matrix(3, 4, rng);
                     return check_gradients([&] { return readout(bn.forward(x), r); },
                                            {x, bn.gamma(), bn.beta()});
                   }});
  cases.push_back({"center_predictor", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "center_predictor"));
                     CenterPredictor pred({3, 8, 2, true, true}, rng);
                     Var x = Var::parameter(random_matrix(3, 6, rng));
                     Matrix r = random_matrix(3, 6, rng);
                     ParamList params;
                     pred.collect_params(params);
                     auto leaves = param_vars(params);
                     leaves.push_back(x);
                     return check_gradients([&] { return readout(pred.forward(x), r); }, leaves);
                   }});
  cases.push_back({"center_predictor_depth4", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "center_predictor_depth4"));
                     CenterPredictor pred({3, 6, 4, false, false}, rng);
                     Var x = Var::parameter(random_matrix(3, 5, rng));
                     Matrix r = random_matrix(3, 5, rng);
                     ParamList params;
                     pred.collect_params(params);
                     auto leaves = param_vars(params);
                     leaves.push_back(x);
                     return check_gradients([&] { return readout(pred.forward(x), r); }, leaves);
                   }});
  cases.push_back({"feature_extractor", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "feature_extractor"));
                     FeatureExtractor ext(5, {8}, 2, rng);
                     Var x = Var::constant(random_matrix(5, 6, rng));
                     Matrix r = random_matrix(2, 6, rng);
                     ParamList params;
                     ext.collect_params(params);
                     return check_gradients([&] { return readout(ext.forward(x), r); },
                                            param_vars(params));
                   }});

  cases.push_back({"id_cross_entropy", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "id_cross_entropy"));
                     std::vector<int> labels{0, 2, 1, 3, 2, 0};
                     Var z = Var::parameter(random_matrix(4, labels.size(), rng));
                     return check_gradients([&] { return id_cross_entropy(z, labels); }, {z});
                   }});
  cases.push_back({"center_loss", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "center_loss"));
                     auto labels = pk_labels(3, 3);
                     Var x = Var::parameter(random_matrix(4, labels.size(), rng));
                     Var c = Var::parameter(random_matrix(4, 3, rng));
                     return check_gradients([&] { return center_loss(x, labels, c); }, {x, c});
                   }});
  cases.push_back(loss_case("triplet_batch_hard", [](const Var& x, std::span<const int> y) {
    return triplet_loss_batch_hard(x, y, 0.3);
  }));
  cases.push_back(loss_case("circle", [](const Var& x, std::span<const int> y) {
    return circle_loss(x, y, 4.0, 0.25);
  }));
  cases.push_back(loss_case("lifted_structure", [](const Var& x, std::span<const int> y) {
    return lifted_structure_loss(x, y, 1.0);
  }));
  cases.push_back(loss_case("ranked_list", [](const Var& x, std::span<const int> y) {
    return ranked_list_loss(x, y, 2.5, 0.8);
  }));

  // CPL: analytic gradient through the detached targets vs FD of the loss with
  // the targets frozen at their initial values.
  for (TargetMode mode : {TargetMode::kLeaveOneOutMean, TargetMode::kRandomPoint,
                          TargetMode::kFarthestPoint, TargetMode::kSampleMean}) {
    std::string name = "cpl_" + std::string(to_string(mode));
    cases.push_back({name, [mode, name](std::uint64_t seed) {
                       Rng rng(derive_seed(seed, name));
                       auto labels = pk_labels(3, 3);
                       CenterPredictor pred({4, 8, 2, true, false}, rng);
                       Var x = Var::parameter(random_matrix(4, labels.size(), rng));
                       CplOptions opts{mode, true, 1e-5};
                       const std::uint64_t target_seed = rng.next();
                       Rng analytic_rng(target_seed);
                       Gradients grads = backward(cpl_loss(x, labels, &pred, opts, &analytic_rng));
                       Rng frozen_rng(target_seed);
                       Var frozen = Var::constant(cpl_targets(x, labels, opts, &frozen_rng).value());
                       ScalarFn frozen_loss = [&] {
                         return cpl_loss_from_targets(pred.forward(x), frozen, labels);
                       };
                       ParamList params;
                       pred.collect_params(params);
                       auto leaves = param_vars(params);
                       leaves.push_back(x);
                       std::vector<Matrix> analytic, numeric;
                       for (Var& leaf : leaves) {
                         analytic.push_back(grads.of(leaf));
                         numeric.push_back(numeric_gradient(frozen_loss, leaf));
                       }
                       return relative_error(analytic, numeric);
                     }});
  }

  cases.push_back({"compose_losses", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, "compose_losses"));
                     auto labels = pk_labels(2, 3);
                     Var x = Var::parameter(random_matrix(3, labels.size(), rng));
                     return check_gradients(
                         [&] {
                           return compose_losses({{"triplet", triplet_loss_batch_hard(x, labels, 0.3)},
                                                  {"rll", ranked_list_loss(x, labels, 2.5, 0.8)}},
                                                 {{"triplet", 0.7}, {"rll", 1.3}})
                               .total;
                         },
                         {x});
                   }});
  return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_registry() {
  static const std::vector<GradCheckCase> registry = build_registry();
  return registry;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t trials) {
  std::vector<GradCheckResult> results;
  for (const auto& c : gradcheck_registry()) {
    GradCheckResult r{c.name, 0.0, trials};
    for (std::size_t t = 0; t < trials; ++t) {
      r.max_rel_error = std::max(r.max_rel_error, c.run(derive_seed(seed, "trial/" + std::to_string(t))));
    }
    results.push_back(r);
  }
  return results;
}

}  // namespace cplab
