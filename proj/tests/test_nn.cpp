#include <cmath>
#include <sstream>

#include "cplab/checkpoint.hpp"
#include "cplab/error.hpp"
#include "cplab/gradcheck.hpp"
#include "cplab/losses.hpp"
#include "cplab/nn.hpp"
#include "doctest.h"

using namespace cplab;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear forward") {
  LinearLayer id(Matrix::identity(2), Matrix(2, 1), "id");
  Matrix x{{0.3, -1}, {2, 5}};
  CHECK(id.forward(Var::constant(x)).value() == x);

  LinearLayer l(Matrix{{2, 0}, {0, 3}}, Matrix{{1}, {1}}, "l");
  CHECK(l.forward(Var::constant(Matrix{{1}, {1}})).value() == Matrix{{3}, {4}});

  CHECK_THROWS_AS(l.forward(Var::constant(Matrix(3, 1))), ShapeError);
}

TEST_CASE("linear init is uniform within sqrt(1/in)") {
  Rng rng(1);
  LinearLayer l(16, 8, rng, "l");
  CHECK(max_abs(l.weight().value()) <= 0.25);
  CHECK(max_abs(l.bias().value()) <= 0.25);
  CHECK(l.weight().requires_grad());
}

TEST_CASE("batchnorm closed-form two-sample case") {
  BatchNormLayer bn(1, "bn");
  Matrix out = bn.forward(Var::constant(Matrix{{1, 3}})).value();
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(out(0, 0) == doctest::Approx(-expected).epsilon(1e-15));
  CHECK(out(0, 1) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("batchnorm zero-variance batch maps to zero") {
  BatchNormLayer bn(1, "bn", false);
  Matrix out = bn.forward(Var::constant(Matrix{{4.5, 4.5}})).value();
  CHECK(out == Matrix{{0, 0}});
}

TEST_CASE("batchnorm eval mode with unit running stats only rescales by eps") {
  BatchNormLayer bn(2, "bn");
  bn.set_mode(Mode::kEval);
  Matrix x{{1, -2, 3}, {0.5, 0, 7}};
  Matrix out = bn.forward(Var::constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(out[i] == doctest::Approx(x[i] / std::sqrt(1.0 + 1e-5)).epsilon(1e-15));
  }
}

TEST_CASE("batchnorm rejects a single-sample training batch") {
  BatchNormLayer bn(3, "bn");
  CHECK_THROWS_AS(bn.forward(Var::constant(Matrix(3, 1))), ContractError);
  bn.set_mode(Mode::kEval);
  CHECK_NOTHROW(bn.forward(Var::constant(Matrix(3, 1))));
}

TEST_CASE("batchnorm output statistics for batch sizes 2..64") {
  Rng rng(11);
  for (std::size_t n : {2, 4, 16, 64}) {
    Matrix x = random_matrix(3, n, rng);
    // Rescale each feature to biased variance 25, so eps/var stays below 1e-6.
    for (std::size_t r = 0; r < 3; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < n; ++c) mu += x(r, c) / n;
      for (std::size_t c = 0; c < n; ++c) var += (x(r, c) - mu) * (x(r, c) - mu) / n;
      for (std::size_t c = 0; c < n; ++c) x(r, c) = 7.0 + (x(r, c) - mu) * 5.0 / std::sqrt(var);
    }
    BatchNormLayer bn(3, "bn", false);
    Matrix y = bn.forward(Var::constant(x)).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < n; ++c) mu += y(r, c) / n;
      for (std::size_t c = 0; c < n; ++c) var += (y(r, c) - mu) * (y(r, c) - mu) / n;
      CAPTURE(n);
      CHECK(std::abs(mu) < 1e-8);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("batchnorm running statistics move only in train mode") {
  BatchNormLayer bn(1, "bn");
  bn.forward(Var::constant(Matrix{{1, 3}}));
  // mean 2, unbiased var 2
  CHECK(bn.running_mean()[0] == doctest::Approx(0.2));
  CHECK(bn.running_var()[0] == doctest::Approx(0.9 + 0.2));
  bn.set_mode(Mode::kEval);
  Matrix before = bn.running_mean();
  bn.forward(Var::constant(Matrix{{10, 30}}));
  CHECK(bn.running_mean() == before);
}

TEST_CASE("center predictor identity initialization") {
  Rng rng(5);
  for (int depth : {2, 4}) {
    CenterPredictor p({3, 10, depth, false, false}, rng);
    p.init_identity(rng);
    Matrix x = random_matrix(3, 7, rng);
    CHECK(p.forward(Var::constant(x)).value() == x);
  }
}

TEST_CASE("center predictor two-layer hand evaluation") {
  Rng rng(0);
  CenterPredictor p({2, 2, 2, false, false}, rng);
  ParamList params;
  p.collect_params(params);
  REQUIRE(params.size() == 4);
  params[0].var.mutable_value() = Matrix{{0.5, -0.25}, {0.1, 0.2}};  // W1
  params[1].var.mutable_value() = Matrix{{0.1}, {-0.3}};             // b1
  params[2].var.mutable_value() = Matrix{{1.0, 2.0}, {-1.0, 0.5}};   // W2
  params[3].var.mutable_value() = Matrix{{0.05}, {0.0}};             // b2
  // x = (1, 0): h = relu(0.6, -0.2) = (0.6, 0); out = (0.6 + 0.05, -0.6)
  Matrix out = p.forward(Var::constant(Matrix{{1}, {0}})).value();
  CHECK(out(0, 0) == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(out(1, 0) == doctest::Approx(-0.6).epsilon(1e-15));
}

TEST_CASE("center predictor depth must be 2 or 4") {
  Rng rng(0);
  CHECK_THROWS_AS(CenterPredictor({2, 8, 3, false, false}, rng), ContractError);
  CHECK_THROWS_AS(CenterPredictor({2, 8, 1, false, false}, rng), ContractError);
}

TEST_CASE("identity init refuses BN or narrow hidden layers") {
  Rng rng(0);
  CenterPredictor bn({2, 8, 2, true, false}, rng);
  CHECK_THROWS_AS(bn.init_identity(rng), ContractError);
  CenterPredictor narrow({4, 6, 2, false, false}, rng);
  CHECK_THROWS_AS(narrow.init_identity(rng), ContractError);
}

TEST_CASE("predictor with BN flags off is a plain MLP") {
  Rng rng(0);
  CenterPredictor p({3, 8, 2, false, false}, rng);
  ParamList params;
  p.collect_params(params);
  CHECK(params.size() == 4);
  StateDict state;
  p.export_state(state);
  CHECK(state.size() == 4);
}

TEST_CASE("every parameter receives gradient") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    FeatureExtractor ext(6, {12}, 4, rng);
    CenterPredictor pred({4, 8, 4, true, true}, rng);
    LinearLayer cls(4, 3, rng, "classifier");
    std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2};
    Var x = Var::constant(random_matrix(6, labels.size(), rng));
    Var emb = ext.forward(x);
    Var total = add(id_cross_entropy(cls.forward(emb), labels),
                    cpl_loss(emb, labels, &pred, CplOptions{}, nullptr));
    Gradients g = backward(total);
    ParamList params;
    ext.collect_params(params);
    pred.collect_params(params);
    cls.collect_params(params);
    for (const auto& p : params) {
      CAPTURE(p.name);
      CHECK(frobenius_norm(g.of(p.var)) > 0.0);
    }
  }
}

TEST_CASE("layers match finite differences") {
  for (const auto& c : gradcheck_registry()) {
    const bool is_layer = c.name == "linear" || c.name == "batchnorm_train" ||
                          c.name == "batchnorm_eval" || c.name == "center_predictor" ||
                          c.name == "center_predictor_depth4" || c.name == "feature_extractor";
    if (!is_layer) continue;
    for (std::uint64_t s = 0; s < 20; ++s) {
      CAPTURE(c.name);
      CAPTURE(s);
      CHECK(c.run(s) < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip restores outputs exactly") {
  Rng rng(9);
  CenterPredictor a({3, 8, 2, true, true}, rng);
  a.forward(Var::constant(random_matrix(3, 5, rng)));  // move running stats
  StateDict state;
  a.export_state(state);
  std::stringstream ss;
  write_state(ss, state);

  Rng other(123);
  CenterPredictor b({3, 8, 2, true, true}, other);
  b.import_state(read_state(ss));
  a.set_mode(Mode::kEval);
  b.set_mode(Mode::kEval);
  Matrix x = random_matrix(3, 4, rng);
  CHECK(a.forward(Var::constant(x)).value() == b.forward(Var::constant(x)).value());
}

TEST_CASE("checkpoint rejects foreign files and shape mismatches") {
  std::stringstream bad("hello 1\n");
  CHECK_THROWS_AS(read_state(bad), IoError);
  std::stringstream wrong_version("cplab-checkpoint 99\nentries 0\n");
  CHECK_THROWS_AS(read_state(wrong_version), IoError);

  Rng rng(0);
  LinearLayer l(2, 2, rng, "l");
  StateDict state{{"l.weight", Matrix(3, 3)}, {"l.bias", Matrix(2, 1)}};
  CHECK_THROWS_AS(l.import_state(state), ShapeError);
  CHECK_THROWS_AS(l.import_state(StateDict{}), IoError);
}

}
