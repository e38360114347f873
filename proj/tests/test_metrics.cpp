#include <cmath>
#include <map>
#include <sstream>

#include "cplab/error.hpp"
#include "cplab/metrics.hpp"
#include "cplab/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cplab;

namespace {

// Ranks come from counting, not sorting: the rank of gallery item j for query
// q is 1 + #{items strictly closer, or equally close with a lower index}.
struct Oracle {
  double map = 0.0;
  std::vector<double> cmc;
  std::size_t evaluated = 0;
};

Oracle oracle(const LabeledBatch& q, const LabeledBatch& g, bool normalize) {
  const Matrix d = pairwise_distances(q.features, g.features, normalize);
  const std::size_t ng = g.size();
  Oracle o;
  o.cmc.assign(ng, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    auto rank_of = [&](std::size_t j) {
      std::size_t r = 1;
      for (std::size_t k = 0; k < ng; ++k)
        if (d(i, k) < d(i, j) || (d(i, k) == d(i, j) && k < j)) ++r;
      return r;
    };
    std::vector<std::size_t> rel_ranks;
    for (std::size_t j = 0; j < ng; ++j)
      if (g.labels[j] == q.labels[i]) rel_ranks.push_back(rank_of(j));
    if (rel_ranks.empty()) continue;
    ++o.evaluated;
    double ap = 0.0;
    for (std::size_t r : rel_ranks) {
      std::size_t hits = 0;
      for (std::size_t s : rel_ranks) hits += s <= r;
      ap += static_cast<double>(hits) / r;
    }
    o.map += ap / rel_ranks.size();
    for (std::size_t k = 1; k <= ng; ++k) {
      bool any = false;
      for (std::size_t r : rel_ranks) any = any || r <= k;
      o.cmc[k - 1] += any;
    }
  }
  if (o.evaluated > 0) {
    o.map /= o.evaluated;
    for (double& c : o.cmc) c /= o.evaluated;
  }
  return o;
}

LabeledBatch random_batch(Rng& rng, std::size_t n, std::size_t dim, int classes, bool grid) {
  LabeledBatch b{Matrix(dim, n), std::vector<int>(n), {}};
  for (double& v : b.features.data())
    v = grid ? static_cast<double>(rng.below(3)) : rng.normal();
  for (int& l : b.labels) l = static_cast<int>(rng.below(classes));
  return b;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("pairwise distance examples") {
  CHECK(pairwise_distances(Matrix{{1}, {2}}, Matrix{{1}, {2}}, false).item() == 0.0);
  CHECK(pairwise_distances(Matrix{{0}, {0}}, Matrix{{3}, {4}}, false).item() == 5.0);
  CHECK(pairwise_distances(Matrix{{2}, {0}}, Matrix{{0}, {3}}, true).item() ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(pairwise_distances(Matrix(2, 1), Matrix(3, 1), false), ShapeError);
}

TEST_CASE("AP with hits at ranks 1 and 3 is 5/6") {
  LabeledBatch q{Matrix{{0}}, {1}, {}};
  LabeledBatch g{Matrix{{1, 2, 3, 4}}, {1, 0, 1, 0}, {}};
  RankingResult r = evaluate_retrieval(q, g, false);
  CHECK(r.average_precision[0] == 5.0 / 6.0);
  CHECK(r.mean_ap == 5.0 / 6.0);
  CHECK(r.first_hit[0] == 1);
  CHECK(r.cmc == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("ties are broken by gallery index") {
  LabeledBatch q{Matrix{{0}}, {1}, {}};
  LabeledBatch g{Matrix{{1, 1, 1}}, {0, 1, 0}, {}};
  RankingResult r = evaluate_retrieval(q, g, false);
  CHECK(r.rankings[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(r.first_hit[0] == 2);
  CHECK(r.average_precision[0] == 0.5);
}

TEST_CASE("nearest neighbour always correct gives rank-1 of 1") {
  LabeledBatch q{Matrix{{0, 10, 20}}, {0, 1, 2}, {}};
  LabeledBatch g{Matrix{{0.1, 10.1, 20.1, 5}}, {0, 1, 2, 0}, {}};
  CHECK(evaluate_retrieval(q, g, false).rank(1) == 1.0);
}

TEST_CASE("queries without relevant items are excluded") {
  LabeledBatch q{Matrix{{0, 1}}, {0, 7}, {}};
  LabeledBatch g{Matrix{{0.5, 3}}, {0, 1}, {}};
  RankingResult r = evaluate_retrieval(q, g, false);
  CHECK(r.excluded == std::vector<std::size_t>{1});
  CHECK(r.query_index == std::vector<std::size_t>{0});
  CHECK(r.mean_ap == 1.0);
  auto j = nlohmann::json::parse(ranking_summary_json(r));
  CHECK(j["excluded"] == 1);
  CHECK(j["mAP"] == 1.0);
}

TEST_CASE("fast evaluation equals the definition on 100 small instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nq = 1 + rng.below(12), ng = 2 + rng.below(20);
    const bool grid = trial % 2 == 0;  // integer coordinates create many ties
    const bool normalize = trial % 3 == 0;
    LabeledBatch q = random_batch(rng, nq, 3, 4, grid);
    LabeledBatch g = random_batch(rng, ng, 3, 4, grid);
    RankingResult r = evaluate_retrieval(q, g, normalize);
    Oracle o = oracle(q, g, normalize);
    CAPTURE(trial);
    REQUIRE(r.query_index.size() == o.evaluated);
    CHECK(std::abs(r.mean_ap - o.map) <= 1e-12);
    for (std::size_t k = 0; k < ng; ++k) CHECK(std::abs(r.cmc[k] - o.cmc[k]) <= 1e-12);
    for (std::size_t k = 1; k < ng; ++k) CHECK(r.cmc[k] >= r.cmc[k - 1]);
    CHECK(r.cmc.back() <= 1.0);
    for (double ap : r.average_precision) CHECK((ap >= 0.0 && ap <= 1.0));
  }
}

TEST_CASE("12 query / 20 gallery instance matches the definition") {
  Rng rng(12);
  LabeledBatch q = random_batch(rng, 12, 4, 3, false);
  LabeledBatch g = random_batch(rng, 20, 4, 3, false);
  CHECK(std::abs(evaluate_retrieval(q, g).mean_ap - oracle(q, g, true).map) <= 1e-12);
}

TEST_CASE("relabeling identities leaves metrics unchanged") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    LabeledBatch q = random_batch(rng, 8, 3, 5, false);
    LabeledBatch g = random_batch(rng, 16, 3, 5, false);
    std::vector<int> perm{0, 1, 2, 3, 4};
    rng.shuffle(perm);
    LabeledBatch q2 = q, g2 = g;
    for (int& l : q2.labels) l = 100 + perm[l];
    for (int& l : g2.labels) l = 100 + perm[l];
    RankingResult a = evaluate_retrieval(q, g), b = evaluate_retrieval(q2, g2);
    CHECK(a.mean_ap == b.mean_ap);
    CHECK(a.cmc == b.cmc);
  }
}

TEST_CASE("ranking csv layout") {
  LabeledBatch q{Matrix{{0}}, {1}, {}};
  LabeledBatch g{Matrix{{1, 2, 3, 4}}, {1, 0, 1, 0}, {}};
  std::ostringstream os;
  write_ranking_csv(os, evaluate_retrieval(q, g, false));
  CHECK(os.str() == "query,ap,first_hit_rank\n0,0.83333333333333337,1\n");
}

}
