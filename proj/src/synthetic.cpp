#include "cplab/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "cplab/error.hpp"
#include "cplab/rng.hpp"

namespace cplab {

void MixtureSpec::validate() const {
  if (components.empty()) throw ContractError("mixture needs at least one component");
  const std::size_t d = components.front().mean.size();
  if (d == 0) throw ContractError("mixture component has an empty mean");
  for (const auto& c : components) {
    if (c.count == 0) throw ContractError("mixture component count must be >= 1");
    if (c.mean.size() != d) throw ShapeError("mixture components disagree on dimension");
    if (c.covariance.rows() != d || c.covariance.cols() != d) {
      throw ShapeError("covariance " + c.covariance.shape_string() + " does not match dim " +
                       std::to_string(d));
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (std::abs(c.covariance(i, j) - c.covariance(j, i)) > 1e-12)
          throw ContractError("covariance is not symmetric");
  }
}

std::size_t MixtureSpec::dim() const { return components.empty() ? 0 : components.front().mean.size(); }

Matrix cholesky_psd(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("cholesky of non-square " + a.shape_string());
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  const double tol = 1e-12 * std::max(scale, 1.0);
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (pivot < -tol) throw NumericError("covariance is not positive semidefinite");
    if (pivot <= tol) {
      // Degenerate direction: the rest of the column must vanish as well.
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (std::abs(s) > std::sqrt(tol)) throw NumericError("covariance is not positive semidefinite");
      }
      continue;
    }
    l(j, j) = std::sqrt(pivot);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

LabeledDataset sample_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t d = spec.dim();
  std::size_t total = 0;
  for (const auto& c : spec.components) total += c.count;
  Matrix features(d, total);
  std::vector<int> labels;
  labels.reserve(total);
  Rng rng(seed);
  std::vector<double> z(d);
  for (const auto& c : spec.components) {
    const Matrix l = cholesky_psd(c.covariance);
    for (std::size_t s = 0; s < c.count; ++s) {
      for (double& v : z) v = rng.normal();
      const std::size_t col = labels.size();
      for (std::size_t i = 0; i < d; ++i) {
        double v = c.mean[i];
        for (std::size_t k = 0; k <= i; ++k) v += l(i, k) * z[k];
        features(i, col) = v;
      }
      labels.push_back(c.label);
    }
  }
  return LabeledDataset(std::move(features), std::move(labels));
}

namespace {

Matrix diagonal(std::size_t d, double first, double rest) {
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = i == 0 ? first : rest;
  return m;
}

std::vector<double> axis_point(std::size_t d, std::size_t axis, double v) {
  if (axis >= d) throw ContractError("fixture needs dim > " + std::to_string(axis));
  std::vector<double> p(d, 0.0);
  p[axis] = v;
  return p;
}

}  // namespace

LabeledDataset two_class_fixture(std::uint64_t seed, FixtureOptions opts) {
  const std::size_t d = opts.dim;
  MixtureSpec spec{{{std::vector<double>(d, 0.0), diagonal(d, 0.25, 0.25), opts.per_class, 0},
                    {axis_point(d, 1, 3.0), diagonal(d, 4.0, 0.25), opts.per_class, 1}}};
  return sample_mixture(spec, seed);
}

LabeledDataset bimodal_fixture(std::uint64_t seed, FixtureOptions opts) {
  const std::size_t d = opts.dim;
  const std::size_t half = opts.per_class / 2;
  MixtureSpec spec{{{axis_point(d, 0, -4.0), diagonal(d, 0.25, 0.25), half, 0},
                    {axis_point(d, 0, 4.0), diagonal(d, 0.25, 0.25), opts.per_class - half, 0},
                    {axis_point(d, 1, 6.0), diagonal(d, 0.25, 0.25), half, 1}}};
  return sample_mixture(spec, seed);
}

LabeledDataset three_class_fixture(std::uint64_t seed, FixtureOptions opts) {
  const std::size_t d = opts.dim;
  if (d < 2) throw ContractError("three-class fixture needs dim >= 2");
  MixtureSpec spec;
  for (int c = 0; c < 3; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / 3.0;
    std::vector<double> mean(d, 0.0);
    mean[0] = 2.0 * std::cos(angle);
    mean[1] = 2.0 * std::sin(angle);
    spec.components.push_back({mean, diagonal(d, 0.5, 0.5), opts.per_class, c});
  }
  return sample_mixture(spec, seed);
}

LabeledDataset separable_fixture(std::uint64_t seed, FixtureOptions opts) {
  const std::size_t d = opts.dim;
  MixtureSpec spec{{{axis_point(d, 0, 3.0), diagonal(d, 0.25, 0.25), opts.per_class, 0},
                    {axis_point(d, 0, -3.0), diagonal(d, 0.25, 0.25), opts.per_class, 1},
                    {axis_point(d, 1, 3.0), diagonal(d, 0.25, 0.25), opts.per_class, 2},
                    {axis_point(d, 1, -3.0), diagonal(d, 0.25, 0.25), opts.per_class, 3}}};
  return sample_mixture(spec, seed);
}

LabeledDataset retrieval_fixture(std::uint64_t seed, RetrievalTaskSpec task) {
  if (task.identities < 2 || task.per_identity < 2 || task.dim == 0)
    throw ContractError("retrieval task needs >= 2 identities of >= 2 samples");
  Rng rng(derive_seed(seed, "retrieval/layout"));
  MixtureSpec spec;
  for (std::size_t id = 0; id < task.identities; ++id) {
    std::vector<double> mean(task.dim);
    for (double& v : mean) v = 2.0 * rng.normal();
    // Axis-aligned spread, per-axis variance in [0.25, 2.25].
    Matrix cov(task.dim, task.dim);
    for (std::size_t i = 0; i < task.dim; ++i) cov(i, i) = rng.uniform(0.25, 2.25);
    spec.components.push_back({mean, cov, task.per_identity, static_cast<int>(id)});
  }
  return sample_mixture(spec, derive_seed(seed, "retrieval/samples"));
}

std::vector<std::string> fixture_names() {
  return {"two-class", "bimodal", "three-class", "separable", "retrieval"};
}

LabeledDataset fixture_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "two-class") return two_class_fixture(seed);
  if (name == "bimodal") return bimodal_fixture(seed);
  if (name == "three-class") return three_class_fixture(seed);
  if (name == "separable") return separable_fixture(seed);
  if (name == "retrieval") return retrieval_fixture(seed);
  throw ContractError("unknown fixture '" + name + "'");
}

}  // namespace cplab
