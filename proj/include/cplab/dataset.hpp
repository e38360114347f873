#ifndef CPLAB_DATASET_HPP_
#define CPLAB_DATASET_HPP_

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cplab/matrix.hpp"

namespace cplab {

// Records stored one per column, with an identity label each.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Matrix features, std::vector<int> labels);

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return features_.rows(); }

  // Identity -> record indices (ascending); covers every record exactly once.
  const std::map<int, std::vector<std::size_t>>& index() const { return index_; }
  std::vector<int> identities() const;
  std::size_t num_identities() const { return index_.size(); }

  LabeledDataset subset(std::span<const std::size_t> records) const;

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
    return a.features_ == b.features_ && a.labels_ == b.labels_;
  }

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::map<int, std::vector<std::size_t>> index_;
};

// A training/evaluation batch: features (dim x N) plus one label per column.
struct LabeledBatch {
  Matrix features;
  std::vector<int> labels;
  // Dataset record each column came from, when produced by a sampler.
  std::vector<std::size_t> records;

  std::size_t size() const { return labels.size(); }
};

LabeledBatch as_batch(const LabeledDataset& ds);

// Same-label column groups in order of first appearance.
std::vector<std::vector<std::size_t>> group_by_label(std::span<const int> labels);

// Labels remapped to 0..C-1 in ascending order of the original ids.
std::vector<int> dense_labels(std::span<const int> labels, std::size_t* num_classes = nullptr);

// CSV: header "f0,...,f{d-1},label", one record per line, label last.
void write_csv(std::ostream& os, const LabeledDataset& ds);
LabeledDataset read_csv(std::istream& is);
void save_csv(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_csv(const std::string& path);

// "%.17g" formatting shared by every CSV writer.
std::string format_double(double v);

}  // namespace cplab

#endif  // CPLAB_DATASET_HPP_
