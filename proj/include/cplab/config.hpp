#ifndef CPLAB_CONFIG_HPP_
#define CPLAB_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cplab/synthetic.hpp"
#include "cplab/trainer.hpp"

namespace cplab {

enum class ExperimentKind { kTrain, kSurface, kBoundary, kAblationTarget, kAblationBn };

ExperimentKind parse_experiment_kind(std::string_view name);
std::string_view to_string(ExperimentKind kind);

struct DataConfig {
  std::string source = "fixture";  // fixture | csv | cifar
  std::string fixture = "separable";
  std::string path;
  std::size_t per_class = 0;  // 0: fixture default
  std::size_t dim = 0;        // 0: fixture default
  std::set<int> cifar_classes{0, 1, 2};
  std::size_t cifar_max_per_class = 500;
  std::size_t cifar_downsample = 4;
  RetrievalTaskSpec retrieval;
  std::size_t train_identities = 16;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTrain;
  // Data streams derive from seed; model, sampler and target streams from
  // train.seed, which defaults to derive_seed(seed, "train").
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  TrainConfig train;
  std::string surface_loss = "cpl";  // center | cpl
  RefitConfig refit;
  std::size_t refit_hidden = 64;
  bool eval_normalize = true;
  double boundary_band = 0.1;
};

// Defaults for an experiment kind, before any user keys are applied.
ExperimentConfig default_config(ExperimentKind kind);

// Sets seed and the derived train.seed.
void set_seed(ExperimentConfig& cfg, std::uint64_t seed);

// Flat "key = value" lines; '#' starts a comment. `experiment` selects the
// defaults, every other key overrides one field; `overrides` win over the
// text. Throws ConfigError naming the key for unknown keys, malformed values
// and violated preconditions.
ExperimentConfig parse_config(std::string_view text,
                              const std::map<std::string, std::string>& overrides = {});

// Every key in a fixed order, so parse_config(echo_config(c)) reproduces c.
std::string echo_config(const ExperimentConfig& cfg, bool include_output = true);

// Throws ConfigError for violated cross-module preconditions.
void validate_config(const ExperimentConfig& cfg);

// FNV-1a 64 of the text, as 16 lowercase hex digits.
std::string config_hash(std::string_view text);

}  // namespace cplab

#endif  // CPLAB_CONFIG_HPP_
