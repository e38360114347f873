#ifndef CPLAB_SAMPLING_HPP_
#define CPLAB_SAMPLING_HPP_

#include <cstdint>
#include <vector>

#include "cplab/dataset.hpp"
#include "cplab/rng.hpp"

namespace cplab {

struct PKSamplerConfig {
  std::size_t p = 16;  // identities per batch
  std::size_t k = 4;   // records per identity
  std::uint64_t seed = 0;
  // Draw with replacement when an identity has fewer than K records.
  bool allow_resample = true;

  void validate() const;
};

// Draws P distinct identities and K records of each; columns are grouped by
// identity. Consumes randomness only from `rng`.
LabeledBatch sample_pk_batch(const LabeledDataset& ds, const PKSamplerConfig& cfg, Rng& rng);

// Builds a batch for a fixed identity list (K records each).
LabeledBatch make_pk_batch(const LabeledDataset& ds, const std::vector<int>& ids,
                           const PKSamplerConfig& cfg, Rng& rng);

// One epoch: identities shuffled with a per-epoch derived seed and cut into
// ceil(#ids / P) groups, each anchoring one batch. A short final group is
// topped up with identities drawn from the rest of the epoch so every batch
// still has P identities.
std::vector<LabeledBatch> epoch_iter(const LabeledDataset& ds, const PKSamplerConfig& cfg,
                                     std::size_t epoch);

// Stateful convenience wrapper: one RNG stream, one batch per call.
class PKSampler {
 public:
  PKSampler(const LabeledDataset& ds, PKSamplerConfig cfg);
  LabeledBatch next();
  std::size_t calls() const { return calls_; }

 private:
  const LabeledDataset& ds_;
  PKSamplerConfig cfg_;
  Rng rng_;
  std::size_t calls_ = 0;
};

}  // namespace cplab

#endif  // CPLAB_SAMPLING_HPP_
