#ifndef CPLAB_SYNTHETIC_HPP_
#define CPLAB_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cplab/dataset.hpp"

namespace cplab {

struct GaussianSpec {
  std::vector<double> mean;
  Matrix covariance;  // symmetric PSD, dim x dim
  std::size_t count = 0;
  int label = 0;
};

// Several components may share a label.
struct MixtureSpec {
  std::vector<GaussianSpec> components;

  void validate() const;
  std::size_t dim() const;
};

// Lower-triangular L with L L^T = a for symmetric positive semidefinite a.
// Zero pivots are allowed (the column is left zero); negative pivots throw
// NumericError.
Matrix cholesky_psd(const Matrix& a);

// Each component draws count samples x = mean + L z with z standard normal
// (Rng::normal), in component order.
LabeledDataset sample_mixture(const MixtureSpec& spec, std::uint64_t seed);

struct FixtureOptions {
  std::size_t dim = 2;
  std::size_t per_class = 500;
};

// Class 0: isotropic, variance 0.25, at the origin.
// Class 1: variances (4.0, 0.25, 0.25, ...), mean 3 along axis 1.
LabeledDataset two_class_fixture(std::uint64_t seed, FixtureOptions opts = {});

// Class 0: equal mixture of N(+/-4 e0, 0.25 I). Class 1: distractor N(6 e1, 0.25 I).
// per_class counts the class-0 samples (split across the two components).
LabeledDataset bimodal_fixture(std::uint64_t seed, FixtureOptions opts = {});

// Three overlapping isotropic classes (variance 0.5) with means on a circle of
// radius 2.
LabeledDataset three_class_fixture(std::uint64_t seed, FixtureOptions opts = {.dim = 2, .per_class = 200});

// Four well-separated classes: means +/-3 e0 and +/-3 e1, variance 0.25.
LabeledDataset separable_fixture(std::uint64_t seed, FixtureOptions opts = {.dim = 4, .per_class = 100});

// Retrieval task: `identities` Gaussian identities with means drawn from
// N(0, 4 I) and anisotropic within-class covariance.
struct RetrievalTaskSpec {
  std::size_t identities = 32;
  std::size_t per_identity = 20;
  std::size_t dim = 8;
};
LabeledDataset retrieval_fixture(std::uint64_t seed, RetrievalTaskSpec spec = {});

// Names accepted by fixture_by_name / `cplab export-fixture`.
std::vector<std::string> fixture_names();
LabeledDataset fixture_by_name(const std::string& name, std::uint64_t seed);

}  // namespace cplab

#endif  // CPLAB_SYNTHETIC_HPP_
