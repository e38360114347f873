#include <algorithm>
#include <cmath>
#include <numeric>

#include "cplab/error.hpp"
#include "cplab/gradcheck.hpp"
#include "cplab/losses.hpp"
#include "doctest.h"

using namespace cplab;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

std::vector<int> pk_labels(std::size_t p, std::size_t k) {
  std::vector<int> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i));
  return labels;
}

double value(const Var& v) { return v.value().item(); }

// ---- exhaustive-pair oracles (plain loops over samples, no autograd) ----

double dist(const Matrix& x, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) s += (x(r, i) - x(r, j)) * (x(r, i) - x(r, j));
  return std::sqrt(s);
}

double cosine(const Matrix& x, std::size_t i, std::size_t j) {
  double dot = 0, ni = 0, nj = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    dot += x(r, i) * x(r, j);
    ni += x(r, i) * x(r, i);
    nj += x(r, j) * x(r, j);
  }
  return dot / std::sqrt(ni * nj);
}

double circle_oracle(const Matrix& x, const std::vector<int>& y, double gamma, double m) {
  double total = 0;
  for (std::size_t a = 0; a < y.size(); ++a) {
    double sn = 0, sp = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (j == a) continue;
      double s = cosine(x, a, j);
      if (y[j] == y[a]) sp += std::exp(-gamma * s);
      else sn += std::exp(gamma * (s + m));
    }
    total += std::log(1.0 + sn * sp);
  }
  return total / y.size();
}

double lifted_oracle(const Matrix& x, const std::vector<int>& y, double m) {
  double total = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      if (y[i] != y[j]) continue;
      double si = 0, sj = 0;
      for (std::size_t k = 0; k < y.size(); ++k) {
        if (y[k] != y[i]) si += std::exp(m - dist(x, i, k));
        if (y[k] != y[j]) sj += std::exp(m - dist(x, j, k));
      }
      total += std::max(0.0, dist(x, i, j) + std::log(si) + std::log(sj));
      ++pairs;
    }
  }
  return total / pairs;
}

double rll_oracle(const Matrix& x, const std::vector<int>& y, double alpha, double m) {
  double total = 0;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = dist(x, i, j);
      total += y[i] == y[j] ? std::max(0.0, d - (alpha - m)) : std::max(0.0, alpha - d);
    }
  }
  return total / (n * (n - 1));
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("id cross-entropy closed forms") {
  std::vector<int> y0{0};
  CHECK(value(id_cross_entropy(Var::constant(Matrix{{0}, {0}}), y0)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(value(id_cross_entropy(Var::constant(Matrix{{30}, {0}, {0}}), y0)) < 1e-10);
  std::vector<int> y{3, 1};
  CHECK(value(id_cross_entropy(Var::constant(Matrix(5, 2, 0.7)), y)) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-15));
  std::vector<int> bad{5};
  CHECK_THROWS_AS(id_cross_entropy(Var::constant(Matrix(3, 1)), bad), ContractError);
}

TEST_CASE("center loss") {
  std::vector<int> y{0, 0};
  Var c = Var::parameter(Matrix{{0}, {0}});
  Var x = Var::parameter(Matrix{{1, -1}, {0, 0}});
  CHECK(value(center_loss(x, y, c)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(value(center_loss(Var::constant(Matrix{{0, 0}, {0, 0}}), y, c)) == 0.0);

  Rng rng(2);
  auto labels = pk_labels(2, 3);
  Var xs = Var::parameter(random_matrix(3, 6, rng));
  Var cs = Var::parameter(random_matrix(3, 2, rng));
  Matrix g = backward(center_loss(xs, labels, cs)).of(xs);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t r = 0; r < 3; ++r)
      CHECK(g(r, i) == doctest::Approx((xs.value()(r, i) - cs.value()(r, labels[i])) / 6.0));

  std::vector<int> missing{0, 2};
  CHECK_THROWS_AS(center_loss(x, missing, c), ContractError);
}

TEST_CASE("batch-hard triplet hand cases") {
  // Two classes on the edges of a 0.5 x 1 rectangle: D(a,p) = 0.5, D(a,n) = 1.
  Var x = Var::constant(Matrix{{0, 0.5, 0, 0.5}, {0, 0, 1, 1}});
  std::vector<int> y{0, 0, 1, 1};
  CHECK(value(triplet_loss_batch_hard(x, y, 0.3)) == 0.0);
  CHECK(value(triplet_loss_batch_hard(x, y, 0.8)) == doctest::Approx(0.3).epsilon(1e-14));

  Var same = Var::constant(Matrix{{1, 1, 1, 1}, {2, 2, 2, 2}});
  CHECK(value(triplet_loss_batch_hard(same, y, 0.3)) == doctest::Approx(0.3).epsilon(1e-14));

  std::vector<int> single{0, 0, 1, 2};
  CHECK_THROWS_AS(triplet_loss_batch_hard(x, single, 0.3), ContractError);
}

TEST_CASE("circle loss closed forms") {
  // Four mutually orthogonal unit vectors: one positive (s=0), two negatives (s=0).
  Var x = Var::constant(Matrix::identity(4));
  std::vector<int> y{0, 0, 1, 1};
  CHECK(value(circle_loss(x, y, 1.0, 0.0)) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // s_p = 1, s_n = -1 at gamma 64: vanishing loss.
  Var far = Var::constant(Matrix{{1, 2, -1, -3}, {0, 0, 0, 0}});
  CHECK(value(circle_loss(far, y, 64.0, 0.0)) < 1e-6);

  std::vector<int> lonely{0, 0, 1, 1};
  lonely[3] = 2;
  CHECK_THROWS_AS(circle_loss(x, lonely, 1.0, 0.0), ContractError);
}

TEST_CASE("lifted structure closed forms and errors") {
  Var x = Var::constant(Matrix{{0, 0, 45}});
  std::vector<int> y{0, 0, 1};
  CHECK(value(lifted_structure_loss(x, y, 1.0)) == 0.0);

  Var pts = Var::constant(Matrix{{0, 1, 0, 1}, {0, 0, 1, 1}});
  std::vector<int> y4{0, 0, 1, 1};
  CHECK(value(lifted_structure_loss(pts, y4, 1.0)) ==
        doctest::Approx(lifted_oracle(pts.value(), y4, 1.0)).epsilon(1e-12));

  std::vector<int> one_class{0, 0, 0};
  CHECK_THROWS_AS(lifted_structure_loss(x, one_class, 1.0), ContractError);
  std::vector<int> no_pos{0, 1, 2};
  CHECK_THROWS_AS(lifted_structure_loss(x, no_pos, 1.0), ContractError);
}

TEST_CASE("ranked list loss hand cases") {
  std::vector<int> pos{0, 0};
  std::vector<int> neg{0, 1};
  CHECK(value(ranked_list_loss(Var::constant(Matrix{{0, 0.5}}), pos, 1.2, 0.4)) == 0.0);
  CHECK(value(ranked_list_loss(Var::constant(Matrix{{0, 1.0}}), pos, 1.2, 0.4)) ==
        doctest::Approx(0.2).epsilon(1e-14));
  CHECK(value(ranked_list_loss(Var::constant(Matrix{{0, 1.0}}), neg, 1.2, 0.4)) ==
        doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS_AS(ranked_list_loss(Var::constant(Matrix{{0, 1.0}}), neg, 0.3, 0.4), ContractError);
}

TEST_CASE("margin config validation") {
  MarginConfig ok;
  CHECK_NOTHROW(ok.validate());
  MarginConfig rll = ok;
  rll.rll_alpha = 0.3;
  rll.rll_margin = 0.4;
  CHECK_THROWS_AS(rll.validate(), ContractError);
  MarginConfig gamma = ok;
  gamma.circle_scale = 0.0;
  CHECK_THROWS_AS(gamma.validate(), ContractError);
}

TEST_CASE("brute-force equivalence for batches of at most 8") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t p = 2 + rng.below(2), k = 2;
    const std::size_t extra = rng.below(3);  // some classes get a third member
    std::vector<int> y = pk_labels(p, k);
    for (std::size_t e = 0; e < extra && y.size() < 8; ++e) y.push_back(static_cast<int>(e % p));
    Matrix xm = random_matrix(3, y.size(), rng);
    Var x = Var::constant(xm);
    CAPTURE(trial);
    CHECK(std::abs(value(circle_loss(x, y, 2.0, 0.25)) - circle_oracle(xm, y, 2.0, 0.25)) < 1e-10);
    CHECK(std::abs(value(lifted_structure_loss(x, y, 1.0)) - lifted_oracle(xm, y, 1.0)) < 1e-10);
    CHECK(std::abs(value(ranked_list_loss(x, y, 1.2, 0.4)) - rll_oracle(xm, y, 1.2, 0.4)) < 1e-10);
  }
}

TEST_CASE("losses are invariant to shuffling samples") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto y = pk_labels(3, 3);
    Matrix xm = random_matrix(4, y.size(), rng);
    std::vector<std::size_t> perm(y.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix xp = select_cols(xm, perm);
    std::vector<int> yp(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) yp[i] = y[perm[i]];

    Var a = Var::constant(xm), b = Var::constant(xp);
    Var centers = Var::constant(random_matrix(4, 3, rng));
    Matrix logits_m = random_matrix(3, y.size(), rng);
    CHECK(std::abs(value(id_cross_entropy(Var::constant(logits_m), y)) -
                   value(id_cross_entropy(Var::constant(select_cols(logits_m, perm)), yp))) < 1e-10);
    CHECK(std::abs(value(center_loss(a, y, centers)) - value(center_loss(b, yp, centers))) < 1e-10);
    CHECK(std::abs(value(triplet_loss_batch_hard(a, y, 0.3)) -
                   value(triplet_loss_batch_hard(b, yp, 0.3))) < 1e-10);
    CHECK(std::abs(value(circle_loss(a, y, 8.0, 0.25)) - value(circle_loss(b, yp, 8.0, 0.25))) < 1e-10);
    CHECK(std::abs(value(lifted_structure_loss(a, y, 1.0)) -
                   value(lifted_structure_loss(b, yp, 1.0))) < 1e-10);
    CHECK(std::abs(value(ranked_list_loss(a, y, 1.2, 0.4)) -
                   value(ranked_list_loss(b, yp, 1.2, 0.4))) < 1e-10);

    Rng prng(trial);
    CenterPredictor pred({4, 8, 2, true, false}, prng);
    for (TargetMode mode : {TargetMode::kLeaveOneOutMean, TargetMode::kFarthestPoint,
                            TargetMode::kSampleMean}) {
      CplOptions opts{mode, true, 1e-5};
      CHECK(std::abs(value(cpl_loss(a, y, &pred, opts, nullptr)) -
                     value(cpl_loss(b, yp, &pred, opts, nullptr))) < 1e-10);
    }
    // Random-point: permute the seeded choice along with the samples.
    CplOptions rp{TargetMode::kRandomPoint, false, 1e-5};
    Rng choice(99);
    Matrix w = cpl_target_weights(xm, y, rp, &choice);
    Matrix wp(w.rows(), w.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t j = 0; j < perm.size(); ++j) wp(i, j) = w(perm[i], perm[j]);
    Var ta = Var::constant(matmul(xm, w)), tb = Var::constant(matmul(xp, wp));
    CHECK(std::abs(value(cpl_loss_from_targets(pred.forward(a), ta, y)) -
                   value(cpl_loss_from_targets(pred.forward(b), tb, yp))) < 1e-10);
  }
}

TEST_CASE("cpl targets") {
  CplOptions loo{TargetMode::kLeaveOneOutMean, false, 1e-5};
  Var x = Var::parameter(Matrix{{0, 2, 4}, {0, 0, 0}});
  std::vector<int> y{7, 7, 7};
  Matrix t = cpl_targets(x, y, loo, nullptr).value();
  CHECK(t(0, 0) == 3.0);
  CHECK(t(1, 0) == 0.0);

  Var two = Var::parameter(Matrix{{1, 5}, {-2, 3}});
  std::vector<int> y2{0, 0};
  Matrix t2 = cpl_targets(two, y2, loo, nullptr).value();
  CHECK(t2.col(0) == two.value().col(1));
  CHECK(t2.col(1) == two.value().col(0));

  for (bool bn : {false, true}) {
    CplOptions o{TargetMode::kLeaveOneOutMean, bn, 1e-5};
    Gradients g = backward(sum(square(cpl_targets(x, y, o, nullptr))));
    CHECK(g.of(x) == Matrix(2, 3));
  }

  std::vector<int> singleton{0, 0, 1};
  CHECK_THROWS_AS(cpl_targets(x, singleton, loo, nullptr), ContractError);
  CHECK_THROWS_AS(parse_target_mode("median"), ContractError);
  CHECK(parse_target_mode("farthest-point") == TargetMode::kFarthestPoint);
}

TEST_CASE("cpl target modes") {
  Matrix xm{{0, 1, 5}, {0, 0, 0}};
  std::vector<int> y{0, 0, 0};
  Var x = Var::constant(xm);
  Matrix far = cpl_targets(x, y, {TargetMode::kFarthestPoint, false, 1e-5}, nullptr).value();
  CHECK(far == Matrix{{5, 5, 0}, {0, 0, 0}});
  Matrix mean = cpl_targets(x, y, {TargetMode::kSampleMean, false, 1e-5}, nullptr).value();
  CHECK(mean(0, 0) == doctest::Approx(2.0));
  CHECK(mean(0, 2) == doctest::Approx(2.0));

  // Farthest-point ties go to the lowest index.
  Matrix tie{{0, -1, 1}};
  Matrix tt = cpl_targets(Var::constant(tie), y, {TargetMode::kFarthestPoint, false, 1e-5}, nullptr).value();
  CHECK(tt(0, 0) == -1.0);

  CplOptions rp{TargetMode::kRandomPoint, false, 1e-5};
  CHECK_THROWS_AS(cpl_targets(x, y, rp, nullptr), ContractError);
  Rng r1(4), r2(4);
  Matrix a = cpl_targets(x, y, rp, &r1).value();
  Matrix b = cpl_targets(x, y, rp, &r2).value();
  CHECK(a == b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a(0, i) != xm(0, i));  // never itself
}

TEST_CASE("cpl loss hand cases") {
  CplOptions loo{TargetMode::kLeaveOneOutMean, false, 1e-5};
  Var x = Var::parameter(Matrix{{1, -1}, {0, 0}});
  std::vector<int> y{0, 0};
  CHECK(value(cpl_loss(x, y, nullptr, loo, nullptr)) == 4.0);
  Rng rng(0);
  CenterPredictor id({2, 4, 2, false, false}, rng);
  id.init_identity(rng);
  CHECK(value(cpl_loss(x, y, &id, loo, nullptr)) == 4.0);

  Var same = Var::parameter(Matrix{{2, 2, 2, -1, -1}, {3, 3, 3, 0, 0}});
  std::vector<int> ys{0, 0, 0, 1, 1};
  CHECK(value(cpl_loss(same, ys, &id, loo, nullptr)) == 0.0);
}

TEST_CASE("cpl per-class normalization sums class means") {
  // Two classes of different sizes: L = mean_c0 + mean_c1.
  CplOptions loo{TargetMode::kLeaveOneOutMean, false, 1e-5};
  Var x = Var::parameter(Matrix{{0, 2, 4, 10, 12}});
  std::vector<int> y{0, 0, 0, 1, 1};
  // class 0 errors: (0-3)^2, (2-2)^2, (4-1)^2 -> mean 6; class 1: 4, 4 -> mean 4
  CHECK(value(cpl_loss(x, y, nullptr, loo, nullptr)) == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("cpl gradient: frozen-target FD agrees, coupled FD does not") {
  CplOptions opts{TargetMode::kLeaveOneOutMean, false, 1e-5};
  Var x = Var::parameter(Matrix{{0.3, -1.1, 1.7, 0.2}, {0.9, 0.4, -0.6, 1.3}});
  std::vector<int> y{0, 0, 1, 1};
  Matrix analytic = backward(cpl_loss(x, y, nullptr, opts, nullptr)).of(x);
  Var frozen = Var::constant(cpl_targets(x, y, opts, nullptr).value());
  Matrix fd_frozen = numeric_gradient([&] { return cpl_loss_from_targets(x, frozen, y); }, x);
  Matrix fd_coupled = numeric_gradient(
      [&] { return cpl_loss_from_targets(x, cpl_targets_coupled(x, y, opts, nullptr), y); }, x);
  CHECK(relative_error(analytic, fd_frozen) < 1e-4);
  CHECK(relative_error(analytic, fd_coupled) > 1e-3);
}

TEST_CASE("losses match finite differences") {
  for (const auto& c : gradcheck_registry()) {
    const bool is_loss = c.name == "id_cross_entropy" || c.name == "center_loss" ||
                         c.name == "triplet_batch_hard" || c.name == "circle" ||
                         c.name == "lifted_structure" || c.name == "ranked_list" ||
                         c.name.rfind("cpl_", 0) == 0 || c.name == "compose_losses";
    if (!is_loss) continue;
    for (std::uint64_t s = 0; s < 20; ++s) {
      CAPTURE(c.name);
      CAPTURE(s);
      CHECK(c.run(s) < 1e-4);
    }
  }
}

TEST_CASE("compose losses") {
  auto b = compose_losses({{"ce", Var::constant(Matrix{{0.7}})}, {"cpl", Var::constant(Matrix{{0.3}})}}, {});
  CHECK(b.total.value().item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.parts.at("ce") == 0.7);
  CHECK(b.weights.at("cpl") == 1.0);
  auto half = compose_losses({{"ce", Var::constant(Matrix{{2.0}})}}, {{"ce", 0.5}});
  CHECK(half.total.value().item() == 1.0);
  CHECK_THROWS_AS(compose_losses({{"ce", Var::constant(Matrix{{std::nan("")}})}}, {}),
                  TrainingDivergence);
}

TEST_CASE("composed gradient is the weighted sum of part gradients") {
  Rng rng(8);
  auto y = pk_labels(2, 3);
  Var x = Var::parameter(random_matrix(3, 6, rng));
  const double wt = 0.7, wr = 1.3;
  Matrix g = backward(compose_losses({{"triplet", triplet_loss_batch_hard(x, y, 0.3)},
                                      {"rll", ranked_list_loss(x, y, 2.5, 0.8)}},
                                     {{"triplet", wt}, {"rll", wr}})
                          .total)
                 .of(x);
  Matrix gt = backward(triplet_loss_batch_hard(x, y, 0.3)).of(x);
  Matrix gr = backward(ranked_list_loss(x, y, 2.5, 0.8)).of(x);
  CHECK(max_abs(g - (gt * wt + gr * wr)) < 1e-12);
  Matrix fd = numeric_gradient(
      [&] {
        return compose_losses({{"triplet", triplet_loss_batch_hard(x, y, 0.3)},
                               {"rll", ranked_list_loss(x, y, 2.5, 0.8)}},
                              {{"triplet", wt}, {"rll", wr}})
            .total;
      },
      x);
  CHECK(relative_error(g, fd) < 1e-4);
}

}
