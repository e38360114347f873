#include "cplab/sampling.hpp"

#include <algorithm>
#include <string>

#include "cplab/error.hpp"

namespace cplab {

void PKSamplerConfig::validate() const {
  if (p < 2) throw ContractError("sampler P must be >= 2, got " + std::to_string(p));
  if (k < 2) throw ContractError("sampler K must be >= 2, got " + std::to_string(k));
}

LabeledBatch make_pk_batch(const LabeledDataset& ds, const std::vector<int>& ids,
                           const PKSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<std::size_t> records;
  std::vector<int> labels;
  records.reserve(ids.size() * cfg.k);
  for (int id : ids) {
    auto it = ds.index().find(id);
    if (it == ds.index().end()) throw ContractError("identity " + std::to_string(id) + " not in dataset");
    std::vector<std::size_t> pool = it->second;
    if (pool.size() >= cfg.k) {
      // Partial Fisher-Yates: the first K slots become a uniform draw.
      for (std::size_t i = 0; i < cfg.k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      pool.resize(cfg.k);
    } else if (cfg.allow_resample) {
      const std::size_t have = pool.size();
      while (pool.size() < cfg.k) pool.push_back(pool[static_cast<std::size_t>(rng.below(have))]);
    } else {
      throw ContractError("identity " + std::to_string(id) + " has " + std::to_string(pool.size()) +
                          " records, fewer than K=" + std::to_string(cfg.k) +
                          " and resampling is off");
    }
    for (std::size_t r : pool) {
      records.push_back(r);
      labels.push_back(id);
    }
  }
  return LabeledBatch{select_cols(ds.features(), records), std::move(labels), std::move(records)};
}

LabeledBatch sample_pk_batch(const LabeledDataset& ds, const PKSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  if (ds.num_identities() < cfg.p) {
    throw ContractError("dataset has " + std::to_string(ds.num_identities()) +
                        " identities, fewer than P=" + std::to_string(cfg.p));
  }
  std::vector<int> ids = ds.identities();
  for (std::size_t i = 0; i < cfg.p; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(cfg.p);
  return make_pk_batch(ds, ids, cfg, rng);
}

std::vector<LabeledBatch> epoch_iter(const LabeledDataset& ds, const PKSamplerConfig& cfg,
                                     std::size_t epoch) {
  cfg.validate();
  if (ds.num_identities() < cfg.p) {
    throw ContractError("dataset has " + std::to_string(ds.num_identities()) +
                        " identities, fewer than P=" + std::to_string(cfg.p));
  }
  Rng rng(derive_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
  std::vector<int> ids = ds.identities();
  rng.shuffle(ids);

  std::vector<LabeledBatch> batches;
  for (std::size_t start = 0; start < ids.size(); start += cfg.p) {
    const std::size_t end = std::min(ids.size(), start + cfg.p);
    std::vector<int> group(ids.begin() + static_cast<std::ptrdiff_t>(start),
                           ids.begin() + static_cast<std::ptrdiff_t>(end));
    if (group.size() < cfg.p) {
      std::vector<int> rest(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(start));
      for (std::size_t i = 0; group.size() < cfg.p; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
        std::swap(rest[i], rest[j]);
        group.push_back(rest[i]);
      }
    }
    batches.push_back(make_pk_batch(ds, group, cfg, rng));
  }
  return batches;
}

PKSampler::PKSampler(const LabeledDataset& ds, PKSamplerConfig cfg)
    : ds_(ds), cfg_(cfg), rng_(derive_seed(cfg.seed, "pk-sampler")) {
  cfg_.validate();
}

LabeledBatch PKSampler::next() {
  ++calls_;
  return sample_pk_batch(ds_, cfg_, rng_);
}

}  // namespace cplab
