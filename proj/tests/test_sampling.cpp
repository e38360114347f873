#include <algorithm>
#include <set>
#include <sstream>

#include "cplab/error.hpp"
#include "cplab/sampling.hpp"
#include "doctest.h"

using namespace cplab;

namespace {

// `ids` identities with `per_id` records each; feature 0 holds the record index.
LabeledDataset toy_dataset(int ids, int per_id) {
  Matrix f(2, static_cast<std::size_t>(ids * per_id));
  std::vector<int> labels;
  for (int i = 0; i < ids; ++i) {
    for (int j = 0; j < per_id; ++j) {
      f(0, labels.size()) = static_cast<double>(labels.size());
      f(1, labels.size()) = i;
      labels.push_back(i * 10);
    }
  }
  return LabeledDataset(f, labels);
}

void check_pk_shape(const LabeledBatch& b, std::size_t p, std::size_t k) {
  REQUIRE(b.size() == p * k);
  auto groups = group_by_label(b.labels);
  CHECK(groups.size() == p);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    CHECK(groups[g].size() == k);
    for (std::size_t j = 0; j < k; ++j) CHECK(groups[g][j] == g * k + j);  // contiguous
  }
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("dataset index covers every record once") {
  LabeledDataset ds(Matrix(1, 5), {3, 1, 3, 2, 1});
  CHECK(ds.num_identities() == 3);
  CHECK(ds.index().at(3) == std::vector<std::size_t>{0, 2});
  std::size_t total = 0;
  for (const auto& [id, recs] : ds.index()) total += recs.size();
  CHECK(total == ds.size());
  CHECK_THROWS_AS(LabeledDataset(Matrix(1, 2), {0}), ShapeError);
}

TEST_CASE("dataset csv round trip is exact") {
  Matrix f{{0.1, -2.5e-17, 3.0}, {1.0 / 3.0, 7, -0.0}};
  LabeledDataset ds(f, {4, 0, 4});
  std::stringstream ss;
  write_csv(ss, ds);
  CHECK(ss.str().rfind("f0,f1,label\n", 0) == 0);
  CHECK(read_csv(ss) == ds);
  std::stringstream bad("f0,label\n1.0\n");
  CHECK_THROWS_AS(read_csv(bad), IoError);
}

TEST_CASE("P=2 K=2 batch on four identities") {
  LabeledDataset ds = toy_dataset(4, 3);
  PKSamplerConfig cfg{2, 2, 1, true};
  Rng rng(1);
  LabeledBatch b = sample_pk_batch(ds, cfg, rng);
  check_pk_shape(b, 2, 2);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(ds.labels()[b.records[i]] == b.labels[i]);
    CHECK(b.features(0, i) == static_cast<double>(b.records[i]));
  }
}

TEST_CASE("P=16 K=4 yields a batch of 64") {
  LabeledDataset ds = toy_dataset(20, 6);
  Rng rng(3);
  check_pk_shape(sample_pk_batch(ds, PKSamplerConfig{}, rng), 16, 4);
}

TEST_CASE("sampler determinism under seed and call count") {
  LabeledDataset ds = toy_dataset(6, 5);
  PKSamplerConfig cfg{3, 2, 42, true};
  PKSampler a(ds, cfg), b(ds, cfg);
  for (int i = 0; i < 5; ++i) {
    LabeledBatch x = a.next(), y = b.next();
    CHECK(x.records == y.records);
    CHECK(x.features == y.features);
  }
  CHECK(a.calls() == 5);
}

TEST_CASE("resampling of short identities") {
  LabeledDataset ds(Matrix(1, 5), {0, 0, 0, 1, 2});
  PKSamplerConfig cfg{3, 3, 0, true};
  Rng rng(0);
  check_pk_shape(sample_pk_batch(ds, cfg, rng), 3, 3);
  cfg.allow_resample = false;
  CHECK_THROWS_AS(sample_pk_batch(ds, cfg, rng), ContractError);
}

TEST_CASE("distinct records without resampling") {
  LabeledDataset ds = toy_dataset(5, 4);
  PKSamplerConfig cfg{5, 4, 0, false};
  Rng rng(9);
  LabeledBatch b = sample_pk_batch(ds, cfg, rng);
  std::set<std::size_t> unique(b.records.begin(), b.records.end());
  CHECK(unique.size() == 20);
}

TEST_CASE("sampler preconditions") {
  LabeledDataset ds = toy_dataset(3, 4);
  Rng rng(0);
  CHECK_THROWS_AS(sample_pk_batch(ds, PKSamplerConfig{4, 2, 0, true}, rng), ContractError);
  CHECK_THROWS_AS((PKSamplerConfig{2, 1, 0, true}).validate(), ContractError);
  CHECK_THROWS_AS((PKSamplerConfig{1, 4, 0, true}).validate(), ContractError);
}

TEST_CASE("epoch of 8 identities with P=2 has 4 batches covering all") {
  LabeledDataset ds = toy_dataset(8, 3);
  PKSamplerConfig cfg{2, 2, 5, true};
  auto batches = epoch_iter(ds, cfg, 0);
  CHECK(batches.size() == 4);
  std::multiset<int> anchors;
  for (const auto& b : batches) {
    check_pk_shape(b, 2, 2);
    for (const auto& g : group_by_label(b.labels)) anchors.insert(b.labels[g.front()]);
  }
  CHECK(anchors.size() == 8);
  CHECK(std::set<int>(anchors.begin(), anchors.end()).size() == 8);
}

TEST_CASE("short final group is topped up to P identities") {
  LabeledDataset ds = toy_dataset(7, 3);
  PKSamplerConfig cfg{3, 2, 5, true};
  auto batches = epoch_iter(ds, cfg, 2);
  CHECK(batches.size() == 3);
  std::set<int> seen;
  for (const auto& b : batches) {
    check_pk_shape(b, 3, 2);
    seen.insert(b.labels.begin(), b.labels.end());
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("epochs reorder identities") {
  LabeledDataset ds = toy_dataset(8, 2);
  PKSamplerConfig cfg{2, 2, 11, true};
  auto order = [&](std::size_t e) {
    std::vector<int> o;
    for (const auto& b : epoch_iter(ds, cfg, e)) o.insert(o.end(), b.labels.begin(), b.labels.end());
    return o;
  };
  const auto first = order(0);
  int differing = 0;
  for (std::size_t e = 1; e <= 100; ++e) differing += order(e) != first;
  CHECK(differing >= 1);
  CHECK(order(3) == order(3));
}

}
